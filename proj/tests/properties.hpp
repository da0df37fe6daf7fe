#pragma once

// Property computations shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "msstokes/fem.hpp"
#include "msstokes/lod.hpp"
#include "msstokes/mesh.hpp"
#include "msstokes/polyspaces.hpp"
#include "msstokes/qoi.hpp"
#include "msstokes/quadrature.hpp"
#include "test_util.hpp"

namespace test {

using namespace msstokes;

inline VectorPoly random_vector_poly(const ScaledFrame& frame, int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorPoly p(frame, m);
  for (int i = 0; i < num_monomials(m); ++i) {
    p.x.coeffs()[i] = u(rng);
    p.y.coeffs()[i] = u(rng);
  }
  return p;
}

inline double l2_inner(const Vertices3& v, int degree, const VectorPoly& a, const VectorPoly& b) {
  return integrate_triangle(v, degree, [&](const Point& x) { return a(x).dot(b(x)); });
}

/// Cosine of the largest principal angle between G^m(T) and Q^m(T) in L²(T):
/// the largest singular value of Lg⁻¹ Mgq Lq⁻ᵀ.
inline double subspace_cosine(const Vertices3& v, int m) {
  const ElementPolyBasis b = build_element_basis(0, v, m);
  const int nG = b.dim_gradient();
  const int nQ = b.dim_complement();
  Eigen::MatrixXd Mgg(nG, nG), Mqq(nQ, nQ), Mgq(nG, nQ);
  std::vector<VectorPoly> G, Q;
  for (int i = 0; i < nG; ++i) G.push_back(b.gradient_function(i));
  for (int k = 0; k < nQ; ++k) Q.push_back(b.complement_function(k));
  for (int i = 0; i < nG; ++i) {
    for (int j = 0; j < nG; ++j) Mgg(i, j) = l2_inner(v, 2 * m, G[i], G[j]);
    for (int k = 0; k < nQ; ++k) Mgq(i, k) = l2_inner(v, 2 * m, G[i], Q[k]);
  }
  for (int k = 0; k < nQ; ++k) {
    for (int l = 0; l < nQ; ++l) Mqq(k, l) = l2_inner(v, 2 * m, Q[k], Q[l]);
  }
  const Eigen::LLT<Eigen::MatrixXd> lg(Mgg), lq(Mqq);
  Eigen::MatrixXd X = lg.matrixL().solve(Mgq);
  X = lq.matrixL().solve(X.transpose()).transpose();
  return Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues()(0);
}

struct DecompositionStats {
  double round_trip = 0.0;   // max coefficientwise |g + q - p|
  double pythagoras = 0.0;   // max relative defect of |p|² = |g|² + |q|²
};

/// `trials` random polynomials of degree m on random triangles; the
/// Pythagoras identity is checked on the first `pythagoras_trials`.
inline DecompositionStats decomposition_stats(int m, int trials, int pythagoras_trials, std::mt19937_64& rng) {
  DecompositionStats s;
  for (int trial = 0; trial < trials; ++trial) {
    const Vertices3 v = random_shape_regular_triangle(rng);
    const ElementPolyBasis b = build_element_basis(0, v, m);
    const VectorPoly p = random_vector_poly(b.frame, m, rng);
    const Decomposition d = decompose(p, b);
    s.round_trip = std::max({s.round_trip, (d.g.x.coeffs() + d.q.x.coeffs() - p.x.coeffs()).lpNorm<Eigen::Infinity>(),
                             (d.g.y.coeffs() + d.q.y.coeffs() - p.y.coeffs()).lpNorm<Eigen::Infinity>()});
    if (trial < pythagoras_trials) {
      const double pp = std::pow(seminorm_Pm(p, m), 2);
      const double gq = std::pow(seminorm_Pm(d.g, m), 2) + std::pow(seminorm_Pm(d.q, m), 2);
      s.pythagoras = std::max(s.pythagoras, std::abs(pp - gq) / std::max(pp, 1e-300));
    }
  }
  return s;
}

/// Largest violation of b(v, χ) = target(χ) over pressures with zero mean on
/// every coarse element: B v - target restricted to K must be a multiple of
/// the mean weights of K.
inline double mean_free_divergence_residual(const LodContext& ctx, const Vector& v, const Vector& target) {
  const Vector bv = ctx.B() * v - target;
  const Vector w = pressure_mean_weights(ctx.space());
  double worst = 0.0;
  for (int K = 0; K < ctx.coarse().num_triangles(); ++K) {
    const auto& fine = ctx.hierarchy().fine_elements(K);
    double bw = 0.0, ww = 0.0;
    for (int t : fine) {
      bw += bv.segment<3>(3 * t).dot(w.segment<3>(3 * t));
      ww += w.segment<3>(3 * t).squaredNorm();
    }
    for (int t : fine) {
      worst = std::max(worst, (bv.segment<3>(3 * t) - bw / ww * w.segment<3>(3 * t)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

/// Smallest nonzero singular value of the pressure Schur complement B A⁻¹ Bᵀ
/// against the pressure mass matrix (ν = 1): the discrete inf-sup constant.
inline double inf_sup_constant(const FineSpace& space) {
  const SparseMatrix A = assemble_a(space, CoefficientField::constant(space.mesh().num_triangles(), 1.0));
  const SparseMatrix B = assemble_b(space);
  const Eigen::MatrixXd M = Eigen::MatrixXd(pressure_mass(space));
  const Eigen::SimplicialLDLT<SparseMatrix> chol(A);
  const Eigen::MatrixXd Bt = Eigen::MatrixXd(SparseMatrix(B.transpose()));
  const Eigen::MatrixXd S = B * chol.solve(Bt);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(S, M, Eigen::EigenvaluesOnly);
  // eigenvalue 0 belongs to the constants; the next one is β²
  const Eigen::VectorXd ev = es.eigenvalues();
  return std::sqrt(std::max(0.0, ev[1]));
}

/// λ_max of ‖v‖²_T / ‖∇v‖²_T over fine velocities on coarse element T (zero
/// on ∂Ω) with vanishing normal flux through every face of T, divided by H².
inline double local_poincare_constant(const MeshHierarchy& h, const FineSpace& space, int T) {
  const SimplicialMesh& fine = space.mesh();
  const SimplicialMesh& coarse = h.coarse();
  std::vector<int> local(space.num_nodes(), -1);
  int n = 0;
  for (int t : h.fine_elements(T)) {
    for (int node : space.element_nodes(t)) {
      if (local[node] < 0 && space.velocity_dof(node, 0) >= 0) local[node] = n++;
    }
  }
  const int dim = 2 * n;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(3, dim);
  for (int t : h.fine_elements(T)) {
    const Vertices3 v = triangle_vertices(fine, t);
    const auto nodes = space.element_nodes(t);
    const double area = fine.area(t);
    const auto& rule = triangle_rule(4);
    for (const auto& q : rule) {
      const Eigen::Vector3d lam(1.0 - q.xi - q.eta, q.xi, q.eta);
      const auto phi = p2_shape(lam);
      const auto grad = p2_shape_gradients(v, lam);
      const double w = 2.0 * area * q.weight;
      for (int a = 0; a < 6; ++a) {
        if (local[nodes[a]] < 0) continue;
        for (int b = 0; b < 6; ++b) {
          if (local[nodes[b]] < 0) continue;
          for (int d = 0; d < 2; ++d) {
            const int i = 2 * local[nodes[a]] + d;
            const int j = 2 * local[nodes[b]] + d;
            K(i, j) += w * grad[a].dot(grad[b]);
            M(i, j) += w * phi[a] * phi[b];
          }
        }
      }
    }
  }
  // normal fluxes through the coarse faces of T
  for (int k = 0; k < 3; ++k) {
    const Face& F = coarse.face(coarse.element_faces(T)[k]);
    const Point ca = coarse.vertex(F.vertices[0]);
    const Point cb = coarse.vertex(F.vertices[1]);
    for (int t : h.fine_elements(T)) {
      const auto nodes = space.element_nodes(t);
      const Vertices3 v = triangle_vertices(fine, t);
      for (int e = 0; e < 3; ++e) {
        const Point a = v[e];
        const Point b = v[(e + 1) % 3];
        auto on_face = [&](const Point& p) {
          const Point d = cb - ca;
          return std::abs(d.x() * (p.y() - ca.y()) - d.y() * (p.x() - ca.x())) < 1e-12;
        };
        if (!on_face(a) || !on_face(b)) continue;
        const double len = (b - a).norm();
        for (const auto& q : line_rule(2)) {
          Eigen::Vector3d lam = Eigen::Vector3d::Zero();
          lam[e] = 1.0 - q.t;
          lam[(e + 1) % 3] = q.t;
          const auto phi = p2_shape(lam);
          for (int s = 0; s < 6; ++s) {
            if (local[nodes[s]] < 0) continue;
            for (int d = 0; d < 2; ++d) C(k, 2 * local[nodes[s]] + d) += q.weight * len * phi[s] * F.normal[d];
          }
        }
      }
    }
  }
  // orthonormal basis of ker C
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) rank += svd.singularValues()[i] > 1e-12 ? 1 : 0;
  const Eigen::MatrixXd Z = svd.matrixV().rightCols(dim - rank);
  const Eigen::MatrixXd Kz = Z.transpose() * K * Z;
  const Eigen::MatrixXd Mz = Z.transpose() * M * Z;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Mz, Kz, Eigen::EigenvaluesOnly);
  const double H = coarse.diameter(T);
  return es.eigenvalues().maxCoeff() / (H * H);
}

}  // namespace test
