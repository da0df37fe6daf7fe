#include "msstokes/fem.hpp"

#include <cmath>
#include <sstream>

#include "msstokes/mesh.hpp"
#include "msstokes/quadrature.hpp"

namespace msstokes {

namespace {

using Local12 = Eigen::Matrix<double, 12, 12>;
using Local3x12 = Eigen::Matrix<double, 3, 12>;

Eigen::Vector3d bary_of(const TriangleQuadPoint& q) { return {1.0 - q.xi - q.eta, q.xi, q.eta}; }

// Velocity block of one triangle; local dof 2 * node + component.
Local12 local_a(const Vertices3& v, double nu, double sigma) {
  const double area = 0.5 * std::abs((v[1] - v[0]).x() * (v[2] - v[0]).y() -
                                     (v[1] - v[0]).y() * (v[2] - v[0]).x());
  Local12 K = Local12::Zero();
  const Eigen::Matrix<double, 6, 6> S = p2_local_stiffness(v);
  Eigen::Matrix<double, 6, 6> M = Eigen::Matrix<double, 6, 6>::Zero();
  if (sigma != 0.0) {
    for (const auto& q : triangle_rule(4)) {
      const auto phi = p2_shape(bary_of(q));
      for (int a = 0; a < 6; ++a) {
        for (int b = 0; b < 6; ++b) M(a, b) += 2.0 * area * q.weight * phi[a] * phi[b];
      }
    }
  }
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < 6; ++b) {
      const double value = nu * S(a, b) + sigma * M(a, b);
      K(2 * a, 2 * b) = value;
      K(2 * a + 1, 2 * b + 1) = value;
    }
  }
  return K;
}

Local3x12 local_b(const Vertices3& v) {
  const double area = 0.5 * std::abs((v[1] - v[0]).x() * (v[2] - v[0]).y() -
                                     (v[1] - v[0]).y() * (v[2] - v[0]).x());
  Local3x12 Bl = Local3x12::Zero();
  for (const auto& q : triangle_rule(2)) {
    const Eigen::Vector3d lam = bary_of(q);
    const auto grad = p2_shape_gradients(v, lam);
    const double w = 2.0 * area * q.weight;
    for (int i = 0; i < 3; ++i) {
      for (int a = 0; a < 6; ++a) {
        Bl(i, 2 * a) -= w * lam[i] * grad[a].x();
        Bl(i, 2 * a + 1) -= w * lam[i] * grad[a].y();
      }
    }
  }
  return Bl;
}

std::array<int, 12> local_dofs(const FineSpace& space, int t) {
  const auto nodes = space.element_nodes(t);
  std::array<int, 12> dofs;
  for (int a = 0; a < 6; ++a) {
    dofs[2 * a] = space.velocity_dof(nodes[a], 0);
    dofs[2 * a + 1] = space.velocity_dof(nodes[a], 1);
  }
  return dofs;
}

Eigen::Matrix<double, 12, 1> gather(const Vector& u, const std::array<int, 12>& dofs) {
  Eigen::Matrix<double, 12, 1> x;
  for (int i = 0; i < 12; ++i) x[i] = dofs[i] < 0 ? 0.0 : u[dofs[i]];
  return x;
}

}  // namespace

FineSpace::FineSpace(std::shared_ptr<const SimplicialMesh> mesh)
    : mesh_(std::move(mesh)), num_triangles_(mesh_->num_triangles()) {
  const int nv = mesh_->num_vertices();
  node_dof_.assign(nv + mesh_->num_faces(), -1);
  for (int v = 0; v < nv; ++v) {
    if (!mesh_->boundary_vertex(v)) node_dof_[v] = num_free_nodes_++;
  }
  for (int f = 0; f < mesh_->num_faces(); ++f) {
    if (!mesh_->face(f).boundary()) node_dof_[nv + f] = num_free_nodes_++;
  }
}

std::array<int, 6> FineSpace::element_nodes(int t) const {
  const auto& tri = mesh_->triangle(t);
  const auto& faces = mesh_->element_faces(t);
  const int nv = mesh_->num_vertices();
  return {tri[0], tri[1], tri[2], nv + faces[0], nv + faces[1], nv + faces[2]};
}

Point FineSpace::node_point(int node) const {
  const int nv = mesh_->num_vertices();
  if (node < nv) return mesh_->vertex(node);
  const Face& f = mesh_->face(node - nv);
  return 0.5 * (mesh_->vertex(f.vertices[0]) + mesh_->vertex(f.vertices[1]));
}

std::array<Point, 6> FineSpace::element_values(const Vector& u, int t) const {
  const auto nodes = element_nodes(t);
  std::array<Point, 6> values;
  for (int a = 0; a < 6; ++a) {
    const int d = node_dof_[nodes[a]];
    values[a] = d < 0 ? Point::Zero() : Point(u[2 * d], u[2 * d + 1]);
  }
  return values;
}

Point FineSpace::evaluate(const Vector& u, int t, const Eigen::Vector3d& bary) const {
  const auto values = element_values(u, t);
  const auto phi = p2_shape(bary);
  Point sum = Point::Zero();
  for (int a = 0; a < 6; ++a) sum += phi[a] * values[a];
  return sum;
}

Eigen::Matrix2d FineSpace::gradient(const Vector& u, int t, const Eigen::Vector3d& bary) const {
  const auto values = element_values(u, t);
  const auto grad = p2_shape_gradients(triangle_vertices(*mesh_, t), bary);
  Eigen::Matrix2d G = Eigen::Matrix2d::Zero();
  for (int a = 0; a < 6; ++a) G += values[a] * grad[a].transpose();
  return G;
}

Vector FineSpace::interpolate(const VectorFunction& f) const {
  Vector u = Vector::Zero(num_velocity_dofs());
  for (int node = 0; node < num_nodes(); ++node) {
    const int d = node_dof_[node];
    if (d < 0) continue;
    const Point value = f(node_point(node));
    u[2 * d] = value.x();
    u[2 * d + 1] = value.y();
  }
  return u;
}

std::array<double, 6> p2_shape(const Eigen::Vector3d& l) {
  return {l[0] * (2.0 * l[0] - 1.0), l[1] * (2.0 * l[1] - 1.0), l[2] * (2.0 * l[2] - 1.0),
          4.0 * l[0] * l[1],         4.0 * l[1] * l[2],         4.0 * l[2] * l[0]};
}

std::array<Point, 3> barycentric_gradients(const Vertices3& v) {
  const double det = (v[1] - v[0]).x() * (v[2] - v[0]).y() - (v[1] - v[0]).y() * (v[2] - v[0]).x();
  std::array<Point, 3> g;
  for (int i = 0; i < 3; ++i) {
    const Point& b = v[(i + 1) % 3];
    const Point& c = v[(i + 2) % 3];
    g[i] = Point(b.y() - c.y(), c.x() - b.x()) / det;
  }
  return g;
}

std::array<Point, 6> p2_shape_gradients(const Vertices3& v, const Eigen::Vector3d& l) {
  const auto g = barycentric_gradients(v);
  std::array<Point, 6> out;
  for (int i = 0; i < 3; ++i) out[i] = (4.0 * l[i] - 1.0) * g[i];
  for (int k = 0; k < 3; ++k) {
    const int j = (k + 1) % 3;
    out[3 + k] = 4.0 * (l[j] * g[k] + l[k] * g[j]);
  }
  return out;
}

Eigen::Matrix<double, 6, 6> p2_local_stiffness(const Vertices3& v) {
  const double area = 0.5 * std::abs((v[1] - v[0]).x() * (v[2] - v[0]).y() -
                                     (v[1] - v[0]).y() * (v[2] - v[0]).x());
  Eigen::Matrix<double, 6, 6> S = Eigen::Matrix<double, 6, 6>::Zero();
  for (const auto& q : triangle_rule(2)) {
    const auto grad = p2_shape_gradients(v, bary_of(q));
    const double w = 2.0 * area * q.weight;
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) S(a, b) += w * grad[a].dot(grad[b]);
    }
  }
  return S;
}

CoefficientField CoefficientField::constant(int num_triangles, double nu, double sigma) {
  CoefficientField c;
  c.nu = Vector::Constant(num_triangles, nu);
  c.sigma = Vector::Constant(num_triangles, sigma);
  c.description = "constant";
  return c;
}

void CoefficientField::validate(int num_triangles) const {
  if (nu.size() != num_triangles || sigma.size() != num_triangles) {
    throw ValidationError("coefficient field does not match the fine mesh");
  }
  for (int t = 0; t < num_triangles; ++t) {
    if (!(nu[t] > 0.0) || !std::isfinite(nu[t])) {
      throw ValidationError("viscosity must be positive (triangle " + std::to_string(t) + ")");
    }
    if (!(sigma[t] >= 0.0) || !std::isfinite(sigma[t])) {
      throw ValidationError("damping must be nonnegative (triangle " + std::to_string(t) + ")");
    }
  }
}

SparseMatrix assemble_a(const FineSpace& space, const CoefficientField& coeff) {
  const SimplicialMesh& mesh = space.mesh();
  coeff.validate(mesh.num_triangles());
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 72);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Local12 K = local_a(triangle_vertices(mesh, t), coeff.nu[t], coeff.sigma[t]);
    const auto dofs = local_dofs(space, t);
    for (int i = 0; i < 12; ++i) {
      if (dofs[i] < 0) continue;
      for (int j = 0; j < 12; ++j) {
        if (dofs[j] < 0 || K(i, j) == 0.0) continue;
        triplets.emplace_back(dofs[i], dofs[j], K(i, j));
      }
    }
  }
  SparseMatrix A(space.num_velocity_dofs(), space.num_velocity_dofs());
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

SparseMatrix assemble_b(const FineSpace& space) {
  const SimplicialMesh& mesh = space.mesh();
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 36);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Local3x12 Bl = local_b(triangle_vertices(mesh, t));
    const auto dofs = local_dofs(space, t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 12; ++j) {
        if (dofs[j] >= 0 && Bl(i, j) != 0.0) triplets.emplace_back(3 * t + i, dofs[j], Bl(i, j));
      }
    }
  }
  SparseMatrix B(space.num_pressure_dofs(), space.num_velocity_dofs());
  B.setFromTriplets(triplets.begin(), triplets.end());
  return B;
}

Vector apply_a_on(const FineSpace& space, const CoefficientField& coeff,
                  const std::vector<int>& triangles, const Vector& u) {
  Vector out = Vector::Zero(space.num_velocity_dofs());
  for (int t : triangles) {
    const auto dofs = local_dofs(space, t);
    const auto x = gather(u, dofs);
    const Eigen::Matrix<double, 12, 1> y =
        local_a(triangle_vertices(space.mesh(), t), coeff.nu[t], coeff.sigma[t]) * x;
    for (int i = 0; i < 12; ++i) {
      if (dofs[i] >= 0) out[dofs[i]] += y[i];
    }
  }
  return out;
}

Vector apply_b_on(const FineSpace& space, const std::vector<int>& triangles, const Vector& u) {
  Vector out = Vector::Zero(space.num_pressure_dofs());
  for (int t : triangles) {
    const auto x = gather(u, local_dofs(space, t));
    out.segment<3>(3 * t) += local_b(triangle_vertices(space.mesh(), t)) * x;
  }
  return out;
}

SparseMatrix pressure_mass(const FineSpace& space) {
  const SimplicialMesh& mesh = space.mesh();
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double a = mesh.area(t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) triplets.emplace_back(3 * t + i, 3 * t + j, a / 12.0 * (i == j ? 2.0 : 1.0));
    }
  }
  SparseMatrix M(space.num_pressure_dofs(), space.num_pressure_dofs());
  M.setFromTriplets(triplets.begin(), triplets.end());
  return M;
}

Vector pressure_mean_weights(const FineSpace& space) {
  Vector w(space.num_pressure_dofs());
  for (int t = 0; t < space.mesh().num_triangles(); ++t) w.segment<3>(3 * t).setConstant(space.mesh().area(t) / 3.0);
  return w;
}

Vector assemble_load(const FineSpace& space, const VectorFunction& f, int quad_degree) {
  const SimplicialMesh& mesh = space.mesh();
  Vector F = Vector::Zero(space.num_velocity_dofs());
  const auto& rule = triangle_rule(quad_degree + 2);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto v = triangle_vertices(mesh, t);
    const auto dofs = local_dofs(space, t);
    const double area = mesh.area(t);
    Eigen::Matrix<double, 12, 1> local = Eigen::Matrix<double, 12, 1>::Zero();
    for (const auto& q : rule) {
      const Eigen::Vector3d lam = bary_of(q);
      const Point x = lam[0] * v[0] + lam[1] * v[1] + lam[2] * v[2];
      const Point fx = f(x);
      const auto phi = p2_shape(lam);
      const double w = 2.0 * area * q.weight;
      for (int a = 0; a < 6; ++a) {
        local[2 * a] += w * fx.x() * phi[a];
        local[2 * a + 1] += w * fx.y() * phi[a];
      }
    }
    for (int i = 0; i < 12; ++i) {
      if (dofs[i] >= 0) F[dofs[i]] += local[i];
    }
  }
  return F;
}

void SaddleFactorization::compute(const SparseMatrix& K) {
  if (K.rows() != K.cols()) throw ValidationError("saddle matrix must be square");
  // UmfPackLU keeps a pointer to the factorized matrix
  K_ = std::make_unique<SparseMatrix>(K);
  K_->makeCompressed();
  lu_ = std::make_unique<Eigen::UmfPackLU<SparseMatrix>>();
  // symmetric pattern, zero diagonal blocks: AMD-style symmetric strategy
  // with METIS ordering is much faster than the default here
  lu_->umfpackControl()(UMFPACK_STRATEGY) = UMFPACK_STRATEGY_SYMMETRIC;
  lu_->umfpackControl()(UMFPACK_ORDERING) = UMFPACK_ORDERING_METIS;
  lu_->umfpackControl()(UMFPACK_IRSTEP) = 0;
  lu_->compute(*K_);
  size_ = static_cast<int>(K.rows());
  if (lu_->info() != Eigen::Success) {
    lu_.reset();
    throw SolverError("sparse LU of a saddle-point system of size " + std::to_string(size_) +
                      " failed (matrix is singular or numerically degenerate)");
  }
}

void SaddleFactorization::refine(const Eigen::MatrixXd& rhs, Eigen::MatrixXd& x) const {
  // iterative refinement is off inside UMFPACK; apply it here only where needed
  for (int step = 0; step <= kRefinementSteps; ++step) {
    const Eigen::MatrixXd r = rhs - *K_ * x;
    double worst = 0.0;
    for (int c = 0; c < rhs.cols(); ++c) {
      const double scale = std::max(rhs.col(c).norm(), 1e-300);
      worst = std::max(worst, r.col(c).norm() / scale);
    }
    if (worst <= kResidualTolerance) return;
    if (step == kRefinementSteps) {
      std::ostringstream msg;
      msg << "saddle-point solve residual " << std::scientific << worst
          << " exceeds tolerance (the system is singular, or the BLAS kernel selection is "
             "broken; try OPENBLAS_CORETYPE=Haswell)";
      throw SolverError(msg.str());
    }
    const Eigen::MatrixXd dx = lu_->solve(r);
    if (!dx.allFinite()) throw SolverError("saddle-point solve failed");
    x += dx;
  }
}

Vector SaddleFactorization::solve(const Vector& rhs) const {
  if (!lu_) throw SolverError("solve called without a valid factorization");
  Eigen::MatrixXd x = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success || !x.allFinite()) throw SolverError("saddle-point solve failed");
  refine(rhs, x);
  return x.col(0);
}

Eigen::MatrixXd SaddleFactorization::solve(const Eigen::MatrixXd& rhs) const {
  if (!lu_) throw SolverError("solve called without a valid factorization");
  Eigen::MatrixXd x = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success || !x.allFinite()) throw SolverError("saddle-point solve failed");
  refine(rhs, x);
  return x;
}

FineSolution solve_reference(const FineSpace& space, const SparseMatrix& A, const SparseMatrix& B,
                             const Vector& load) {
  const int nu = space.num_velocity_dofs();
  const int np = space.num_pressure_dofs();
  if (A.rows() != nu || B.rows() != np || B.cols() != nu || load.size() != nu) {
    throw ValidationError("reference solve: operator sizes do not match the fine space");
  }
  const Vector w = pressure_mean_weights(space);
  std::vector<Triplet> triplets;
  triplets.reserve(A.nonZeros() + 2 * B.nonZeros() + 2 * np);
  for (int k = 0; k < A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) triplets.emplace_back(it.row(), it.col(), it.value());
  }
  for (int k = 0; k < B.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(B, k); it; ++it) {
      triplets.emplace_back(nu + it.row(), it.col(), it.value());
      triplets.emplace_back(it.col(), nu + it.row(), it.value());
    }
  }
  // p_0 = 0 through one extra unknown; the mean is removed afterwards
  triplets.emplace_back(nu, nu + np, 1.0);
  triplets.emplace_back(nu + np, nu, 1.0);
  SparseMatrix K(nu + np + 1, nu + np + 1);
  K.setFromTriplets(triplets.begin(), triplets.end());
  Vector rhs = Vector::Zero(nu + np + 1);
  rhs.head(nu) = load;
  if (load.norm() == 0.0) return {Vector::Zero(nu), Vector::Zero(np)};
  const SaddleFactorization lu(K);
  const Vector x = lu.solve(rhs);
  Vector p = x.segment(nu, np);
  p.array() -= w.dot(p) / w.sum();
  return {x.head(nu), p};
}

FineSolution solve_reference(const FineSpace& space, const CoefficientField& coeff,
                             const VectorFunction& f) {
  return solve_reference(space, assemble_a(space, coeff), assemble_b(space), assemble_load(space, f));
}

double divergence_norm(const FineSpace& space, const Vector& u) {
  double sum = 0.0;
  for (int t = 0; t < space.mesh().num_triangles(); ++t) {
    const double area = space.mesh().area(t);
    for (const auto& q : triangle_rule(2)) {
      const double d = space.gradient(u, t, bary_of(q)).trace();
      sum += 2.0 * area * q.weight * d * d;
    }
  }
  return std::sqrt(sum);
}

VelocityErrors error_norms(const FineSpace& space, const Vector& u, const Vector& w) {
  if (u.size() != space.num_velocity_dofs() || w.size() != space.num_velocity_dofs()) {
    throw ValidationError("error_norms: velocity vectors do not match the fine space");
  }
  const Vector e = u - w;
  double h1 = 0.0;
  double l2 = 0.0;
  for (int t = 0; t < space.mesh().num_triangles(); ++t) {
    const double area = space.mesh().area(t);
    for (const auto& q : triangle_rule(4)) {
      const Eigen::Vector3d lam = bary_of(q);
      const double wq = 2.0 * area * q.weight;
      h1 += wq * space.gradient(e, t, lam).squaredNorm();
      l2 += wq * space.evaluate(e, t, lam).squaredNorm();
    }
  }
  return {std::sqrt(h1), std::sqrt(l2)};
}

double pressure_l2_norm(const FineSpace& space, const Vector& p) {
  const SparseMatrix M = pressure_mass(space);
  return std::sqrt(std::max(0.0, p.dot(M * p)));
}

}  // namespace msstokes
