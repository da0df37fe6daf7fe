#include <cmath>
#include <random>

#include "doctest.h"
#include "msstokes/fem.hpp"
#include "msstokes/mesh.hpp"
#include "msstokes/qoi.hpp"
#include "msstokes/quadrature.hpp"

using namespace msstokes;

namespace {

struct Setup {
  std::shared_ptr<const RefinementChain> chain;
  MeshHierarchy hierarchy;
  FineSpace space;

  Setup(int coarse_level, int fine_level)
      : chain(std::make_shared<const RefinementChain>(fine_level)),
        hierarchy(chain, coarse_level, fine_level),
        space(hierarchy.fine_ptr()) {}
};

Vector random_velocity(const FineSpace& space, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(space.num_velocity_dofs());
  for (int i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

Point eval_fine(const FineSpace& space, const Vector& v, int t, const Point& x) {
  return space.evaluate(v, t, barycentric_coordinates(triangle_vertices(space.mesh(), t), x));
}

// ∫ over the fine triangles of coarse element T
double integrate_on_coarse(const MeshHierarchy& h, int T, int degree, const std::function<double(int, const Point&)>& f) {
  double s = 0.0;
  for (int t : h.fine_elements(T)) {
    s += integrate_triangle(triangle_vertices(h.fine(), t), degree, [&](const Point& x) { return f(t, x); });
  }
  return s;
}

// coarse P1 field from nodal values, evaluated on coarse element T
Point p1_value(const SimplicialMesh& coarse, const std::vector<Point>& nodal, int T, const Point& x) {
  const Eigen::Vector3d lam = barycentric_coordinates(triangle_vertices(coarse, T), x);
  const auto& tri = coarse.triangle(T);
  return lam[0] * nodal[tri[0]] + lam[1] * nodal[tri[1]] + lam[2] * nodal[tri[2]];
}

Eigen::Matrix2d p1_gradient(const SimplicialMesh& coarse, const std::vector<Point>& nodal, int T) {
  const auto g = barycentric_gradients(triangle_vertices(coarse, T));
  const auto& tri = coarse.triangle(T);
  Eigen::Matrix2d G = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 3; ++i) G += nodal[tri[i]] * g[i].transpose();
  return G;
}

double grad_sq_on(const Setup& s, const Vector& v, const std::vector<int>& coarse_elements) {
  double sum = 0.0;
  for (int T : coarse_elements) {
    sum += integrate_on_coarse(s.hierarchy, T, 2, [&](int t, const Point& x) {
      const auto bary = barycentric_coordinates(triangle_vertices(s.space.mesh(), t), x);
      return s.space.gradient(v, t, bary).squaredNorm();
    });
  }
  return sum;
}

}  // namespace

TEST_CASE("multiplier space dimensions and indexing") {
  const Setup s(2, 3);
  const SimplicialMesh& coarse = s.hierarchy.coarse();
  for (int m = 0; m <= 3; ++m) {
    const MultiplierSpace M(s.hierarchy, m);
    CHECK(M.size() == (m + 1) * static_cast<int>(coarse.interior_faces().size()) +
                          complement_dimension(m) * coarse.num_triangles());
    for (int i = 0; i < M.size(); ++i) {
      const auto e = M.decode(i);
      CHECK((e.face ? M.face_index(e.entity, e.local) : M.element_index(e.entity, e.local)) == i);
    }
  }
  const MultiplierSpace M(s.hierarchy, 1);
  for (int f = 0; f < coarse.num_faces(); ++f) {
    if (coarse.face(f).boundary()) CHECK_THROWS_AS(M.face_index(f, 0), ValidationError);
  }
}

TEST_CASE("c on a constant field: face rows give H |F| (c·n)") {
  const Setup s(2, 4);
  const SimplicialMesh& coarse = s.hierarchy.coarse();
  const QoiSystem qoi(s.hierarchy, s.space, 1);
  const Point c(0.3, -1.7);
  const Vector v = s.space.interpolate([&](const Point&) { return c; });
  const Vector q = qoi.qoi_of(v);
  int tested = 0;
  for (int f : coarse.interior_faces()) {
    const Face& F = coarse.face(f);
    if (coarse.boundary_vertex(F.vertices[0]) || coarse.boundary_vertex(F.vertices[1])) continue;
    ++tested;
    const MultiplierSpace& M = qoi.multipliers();
    CHECK(q[M.face_index(f, 0)] == doctest::Approx(s.hierarchy.H() * F.length * c.dot(F.normal)).epsilon(1e-12));
    CHECK(std::abs(q[M.face_index(f, 1)]) < 1e-13);
  }
  CHECK(tested > 0);
}

TEST_CASE("m = 0 has no element block") {
  const Setup s(1, 3);
  const QoiSystem qoi(s.hierarchy, s.space, 0);
  CHECK(qoi.c().rows() == static_cast<int>(s.hierarchy.coarse().interior_faces().size()));
  CHECK(qoi.multipliers().size() == qoi.multipliers().num_face_multipliers());
}

TEST_CASE("qoi_of agrees with a direct quadrature oracle") {
  const Setup s(1, 3);
  const SimplicialMesh& coarse = s.hierarchy.coarse();
  std::mt19937_64 rng(5);
  for (int m = 0; m <= 2; ++m) {
    const QoiSystem qoi(s.hierarchy, s.space, m);
    const MultiplierSpace& M = qoi.multipliers();
    const Vector v = random_velocity(s.space, rng);
    const Vector q = qoi.qoi_of(v);
    CHECK((q - assemble_c(qoi) * v).norm() == 0.0);
    for (int f : coarse.interior_faces()) {
      const Face& F = coarse.face(f);
      const FacePolyBasis& fb = M.face_basis(f);
      for (int j = 0; j <= m; ++j) {
        double s_face = 0.0;
        for (const FaceSegment& seg : qoi.segments(f)) {
          const Face& e = s.hierarchy.fine().face(seg.fine_face);
          const Point a = s.hierarchy.fine().vertex(e.vertices[0]);
          const Point b = s.hierarchy.fine().vertex(e.vertices[1]);
          for (const auto& g : line_rule(m + 3)) {
            const Point x = a + g.t * (b - a);
            s_face += g.weight * e.length * eval_fine(s.space, v, seg.fine_triangle, x).dot(F.normal) * fb.value_at(j, x);
          }
        }
        const double expected = s.hierarchy.H() * s_face;
        CHECK(std::abs(q[M.face_index(f, j)] - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
      }
    }
    for (int T = 0; T < coarse.num_triangles(); ++T) {
      for (int k = 0; k < M.K(); ++k) {
        const VectorPoly p = M.element_basis(T).complement_function(k);
        const double expected = integrate_on_coarse(s.hierarchy, T, m + 2, [&](int t, const Point& x) {
          return eval_fine(s.space, v, t, x).dot(p(x));
        });
        CHECK(std::abs(q[M.element_index(T, k)] - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
      }
    }
  }
}

TEST_CASE("c_T partition of unity") {
  const Setup s(1, 3);
  const SimplicialMesh& coarse = s.hierarchy.coarse();
  const QoiSystem qoi(s.hierarchy, s.space, 1);
  const KappaTable kappa = KappaTable::uniform(coarse);
  kappa.validate(coarse);
  SparseMatrix sum(qoi.c().rows(), qoi.c().cols());
  for (int T = 0; T < coarse.num_triangles(); ++T) {
    const SparseMatrix cT = qoi.assemble_cT(T, kappa);
    sum += cT;
    // an interior face row gets half the face contribution from each neighbour
    for (int f : coarse.element_faces(T)) {
      if (coarse.face(f).boundary()) continue;
      const int row = qoi.multipliers().face_index(f, 0);
      const Vector full = SparseMatrix(qoi.c().row(row)).transpose().toDense();
      const Vector half = SparseMatrix(cT.row(row)).transpose().toDense();
      CHECK((2.0 * half - full).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  CHECK(Eigen::MatrixXd(sum - qoi.c()).cwiseAbs().maxCoeff() <= 1e-12);

  KappaTable bad = kappa;
  for (int f : coarse.interior_faces()) bad.weights[f] = {0.7, 0.7};
  CHECK_THROWS_AS(bad.validate(coarse), ValidationError);
}

TEST_CASE("fine-scale space is the kernel of c") {
  const Setup s(1, 3);
  const QoiSystem qoi(s.hierarchy, s.space, 1);
  const Eigen::MatrixXd C = Eigen::MatrixXd(qoi.c());
  const Eigen::LDLT<Eigen::MatrixXd> ccT(C * C.transpose());
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    Vector v = random_velocity(s.space, rng);
    v -= C.transpose() * ccT.solve(C * v);
    CHECK(qoi.qoi_of(v).cwiseAbs().maxCoeff() <= 1e-11);
  }
  // a field with a nonzero QOI is not in the kernel
  const Vector w = s.space.interpolate([](const Point&) { return Point(1.0, 0.0); });
  CHECK(qoi.qoi_of(w).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("I_H face pairs and constant reproduction") {
  const Setup s(3, 5);
  const SimplicialMesh& coarse = s.hierarchy.coarse();
  const QoiSystem qoi(s.hierarchy, s.space, 0);
  const QuasiInterpolant ih(coarse);
  for (int z = 0; z < coarse.num_vertices(); ++z) {
    if (coarse.boundary_vertex(z)) {
      CHECK(!ih.pair(z).has_value());
      continue;
    }
    REQUIRE(ih.pair(z).has_value());
    const auto& pr = *ih.pair(z);
    const Point n1 = coarse.face(pr.faces[0]).normal;
    const Point n2 = coarse.face(pr.faces[1]).normal;
    CHECK(std::abs(n1.x() * n2.y() - n1.y() * n2.x()) >= 0.1);
  }
  const Point c(1.0, 0.0);
  const Vector v = s.space.interpolate([&](const Point&) { return c; });
  const auto nodal = interp_IH(qoi, ih, v);
  int tested = 0;
  for (int z = 0; z < coarse.num_vertices(); ++z) {
    if (coarse.boundary_vertex(z)) {
      CHECK(nodal[z].norm() == 0.0);
      continue;
    }
    bool away = true;
    for (int f : ih.pair(z)->faces) {
      for (int w : coarse.face(f).vertices) away &= !coarse.boundary_vertex(w);
    }
    if (!away) continue;
    ++tested;
    CHECK((nodal[z] - c).norm() <= 1e-12);
  }
  CHECK(tested > 0);
}

TEST_CASE("I_H depends only on the average normal fluxes") {
  const Setup s(2, 4);
  const QoiSystem qoi(s.hierarchy, s.space, 0);
  const QuasiInterpolant ih(s.hierarchy.coarse());
  std::mt19937_64 rng(21);
  const Vector v = random_velocity(s.space, rng);
  // perturb dofs at fine nodes strictly inside one coarse element
  Vector w = v;
  const int T = 3;
  const Vertices3 cv = triangle_vertices(s.hierarchy.coarse(), T);
  for (int t : s.hierarchy.fine_elements(T)) {
    for (int node : s.space.element_nodes(t)) {
      const Eigen::Vector3d lam = barycentric_coordinates(cv, s.space.node_point(node));
      if (lam.minCoeff() < 1e-12) continue;
      w[s.space.velocity_dof(node, 0)] += 5.0;
      w[s.space.velocity_dof(node, 1)] -= 2.0;
    }
  }
  CHECK((w - v).norm() > 1.0);
  CHECK((qoi.average_fluxes(w) - qoi.average_fluxes(v)).cwiseAbs().maxCoeff() <= 1e-13);
  const auto a = interp_IH(qoi, ih, v);
  const auto b = interp_IH(qoi, ih, w);
  for (std::size_t z = 0; z < a.size(); ++z) CHECK((a[z] - b[z]).norm() <= 1e-12);
}

TEST_CASE("I_H stability and approximation constants") {
  std::mt19937_64 rng(99);
  double worst_stab = 0.0;
  double worst_approx = 0.0;
  for (int level : {1, 2, 3}) {
    const Setup s(level, level + 2);
    const SimplicialMesh& coarse = s.hierarchy.coarse();
    const QoiSystem qoi(s.hierarchy, s.space, 0);
    const QuasiInterpolant ih(coarse);
    const int trials = level == 2 ? 100 : 20;
    for (int trial = 0; trial < trials; ++trial) {
      Vector v = random_velocity(s.space, rng);
      if (trial % 2 == 1) {
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        const double a = u(rng), b = u(rng), c = u(rng);
        v = s.space.interpolate([&](const Point& x) {
          return Point(std::sin(a * x.x() + b * x.y()), std::cos(c * x.x() * x.y()) + x.x());
        });
      }
      const auto nodal = interp_IH(qoi, ih, v);
      for (int T = 0; T < coarse.num_triangles(); ++T) {
        const Patch patch = make_patch(coarse, T, 1);
        const double grad_patch = std::sqrt(grad_sq_on(s, v, patch.elements));
        if (grad_patch == 0.0) continue;
        const double grad_ih = std::sqrt(coarse.area(T)) * p1_gradient(coarse, nodal, T).norm();
        const double err = std::sqrt(integrate_on_coarse(s.hierarchy, T, 4, [&](int t, const Point& x) {
          return (eval_fine(s.space, v, t, x) - p1_value(coarse, nodal, T, x)).squaredNorm();
        }));
        if (level == 2) worst_stab = std::max(worst_stab, grad_ih / grad_patch);
        worst_approx = std::max(worst_approx, err / (s.hierarchy.H() * grad_patch));
      }
    }
  }
  MESSAGE("I_H stability constant " << worst_stab << ", approximation constant " << worst_approx);
  CHECK(worst_stab <= 20.0);
  CHECK(worst_approx <= 20.0);
}

TEST_CASE("coarse nodal lift") {
  const Setup s(2, 3);
  const SimplicialMesh& coarse = s.hierarchy.coarse();
  const QuasiInterpolant ih(coarse);
  for (int f : coarse.interior_faces()) {
    for (const Point& p : ih.nodal_lift(f, 1)) CHECK(p.norm() == 0.0);
    const auto theta = ih.nodal_lift(f, 0);
    CHECK(theta.size() == static_cast<std::size_t>(coarse.num_vertices()));
    for (int z = 0; z < coarse.num_vertices(); ++z) {
      const auto& pr = ih.pair(z);
      if (!pr || (pr->faces[0] != f && pr->faces[1] != f)) {
        CHECK(theta[z].norm() == 0.0);
        continue;
      }
      const int col = pr->faces[0] == f ? 0 : 1;
      CHECK((theta[z] - pr->inverse.col(col)).norm() <= 1e-14);
      // the stored inverse really inverts the normal matrix
      Eigen::Matrix2d N;
      N.row(0) = coarse.face(pr->faces[0]).normal.transpose();
      N.row(1) = coarse.face(pr->faces[1]).normal.transpose();
      CHECK((N * pr->inverse - Eigen::Matrix2d::Identity()).norm() <= 1e-13);
    }
    const auto again = coarse_nodal_lift(ih, f, 0);
    for (int z = 0; z < coarse.num_vertices(); ++z) CHECK(again[z] == theta[z]);
  }
}
