#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "msstokes/mesh.hpp"
#include "msstokes/polyspaces.hpp"
#include "properties.hpp"
#include "test_util.hpp"

using namespace msstokes;

using test::l2_inner;
using test::subspace_cosine;

namespace {

VectorPoly random_poly(const ScaledFrame& frame, int m, std::mt19937_64& rng) {
  return test::random_vector_poly(frame, m, rng);
}

}  // namespace

TEST_CASE("element basis dimensions") {
  const Vertices3 v = test::reference_triangle();
  const int expected_q[] = {0, 1, 3, 6};
  for (int m = 0; m <= 3; ++m) {
    const ElementPolyBasis b = build_element_basis(0, v, m);
    CHECK(b.dim_gradient() == num_monomials(m + 1) - 1);
    CHECK(b.dim_complement() == expected_q[m]);
    CHECK(b.dim_complement() == complement_dimension(m));
    CHECK(b.dim_gradient() + b.dim_complement() == (m + 1) * (m + 2));
  }
  CHECK(build_element_basis(0, v, 1).dim_gradient() == 5);
}

TEST_CASE("decompose: closed-form cases") {
  const Vertices3 v = test::reference_triangle();
  const ElementPolyBasis b = build_element_basis(0, v, 1);
  const ScaledFrame& f = b.frame;
  SUBCASE("constant field is a gradient") {
    VectorPoly p(f, 1);
    p.x.coeff(0, 0) = 1.0;
    const Decomposition d = decompose(p, b);
    CHECK(d.q.x.coeffs().norm() + d.q.y.coeffs().norm() < 1e-14);
    CHECK((d.g.x.coeffs() - p.x.coeffs()).norm() < 1e-14);
  }
  SUBCASE("rotation field lies in the complement") {
    VectorPoly p(f, 1);
    p.x.coeff(0, 1) = -1.0;
    p.y.coeff(1, 0) = 1.0;
    const Decomposition d = decompose(p, b);
    CHECK(d.g.x.coeffs().norm() + d.g.y.coeffs().norm() < 1e-14);
    CHECK((d.q.x.coeffs() - p.x.coeffs()).norm() < 1e-14);
    CHECK((d.q.y.coeffs() - p.y.coeffs()).norm() < 1e-14);
  }
  SUBCASE("degree and frame mismatches are rejected") {
    CHECK_THROWS_AS(decompose(VectorPoly(f, 2), b), ValidationError);
    ScaledFrame other = f;
    other.center += Point(0.1, 0.0);
    CHECK_THROWS_AS(decompose(VectorPoly(other, 1), b), ValidationError);
  }
}

TEST_CASE("direct-sum round trip and Pythagoras identity") {
  std::mt19937_64 rng(7);
  for (int m = 0; m <= 3; ++m) {
    const test::DecompositionStats s = test::decomposition_stats(m, 500, 100, rng);
    INFO("m " << m << " round trip " << s.round_trip << " pythagoras " << s.pythagoras);
    CHECK(s.round_trip <= 1e-11);
    CHECK(s.pythagoras <= 1e-10);
  }
}

TEST_CASE("seminorm examples") {
  const Vertices3 v = test::reference_triangle();
  const ScaledFrame f = ScaledFrame::of_triangle(v);
  ScalarPoly x(f, 1);  // physical x
  x.coeff(0, 0) = f.center.x();
  x.coeff(1, 0) = f.scale;
  CHECK(seminorm_Pm(x, 1) == doctest::Approx(1.0).epsilon(1e-14));
  ScalarPoly c(f, 2);
  c.coeff(0, 0) = 3.0;
  CHECK(seminorm_Pm(c, 1) == 0.0);
  CHECK(seminorm_Pm(c, 2) == 0.0);
}

TEST_CASE("strengthened Cauchy-Schwarz: closed-form cases") {
  const Vertices3 equilateral{Point(0, 0), Point(1, 0), Point(0.5, std::sqrt(3.0) / 2.0)};
  // m = 1: Q is the rotation field, orthogonal to every gradient on an equilateral triangle
  CHECK(subspace_cosine(equilateral, 1) < 1e-12);
  CHECK(subspace_cosine(test::reference_triangle(), 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("strengthened Cauchy-Schwarz between gradient space and complement") {
  // The constant depends on the shape: at m = 3 it approaches 1 as the minimum
  // angle drops towards 15 degrees. The ensemble is at least as regular as the
  // coarse meshes used by the solver (right isosceles, 45 degrees) allow.
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int m = 1; m <= 3; ++m) {
    for (int trial = 0; trial < 200; ++trial) {
      worst = std::max(worst, subspace_cosine(test::random_shape_regular_triangle(rng, 40.0), m));
    }
  }
  MESSAGE("largest cosine between G^m and Q^m: " << worst);
  CHECK(worst <= 0.99);
}

TEST_CASE("G^m and Q^m stay apart on thin triangles") {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int m = 1; m <= 3; ++m) {
    for (int trial = 0; trial < 200; ++trial) {
      worst = std::max(worst, subspace_cosine(test::random_shape_regular_triangle(rng), m));
    }
  }
  MESSAGE("largest cosine at minimum angle 15 degrees: " << worst);
  CHECK(worst < 1.0 - 1e-6);
}

TEST_CASE("complement part is stable in L2") {
  std::mt19937_64 rng(13);
  double worst = 0.0;
  for (int m = 1; m <= 3; ++m) {
    for (int trial = 0; trial < 200; ++trial) {
      const Vertices3 v = test::random_shape_regular_triangle(rng);
      const ElementPolyBasis b = build_element_basis(0, v, m);
      const VectorPoly p = random_poly(b.frame, m, rng);
      const Decomposition d = decompose(p, b);
      const double ratio = std::sqrt(l2_inner(v, 2 * m, d.q, d.q) / l2_inner(v, 2 * m, p, p));
      worst = std::max(worst, ratio);
    }
  }
  MESSAGE("max ‖q‖/‖p‖: " << worst);
  CHECK(worst <= 50.0);
}

TEST_CASE("projection onto piecewise polynomials") {
  RefinementChain chain(1);
  const SimplicialMesh& mesh = chain.level(1);
  SUBCASE("m = 0 of x gives centroid abscissa") {
    const auto field = project_PiHm(mesh, [](const Point& x) { return Point(x.x(), 0.0); }, 0, 4);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      CHECK(field(t, mesh.centroid(t)).x() == doctest::Approx(mesh.centroid(t).x()).epsilon(1e-13));
    }
  }
  SUBCASE("polynomials of degree m are reproduced") {
    auto f = [](const Point& x) { return Point(x.x() * x.y() - 2.0 * x.y() * x.y(), 1.0 + x.x() * x.x()); };
    const auto field = project_PiHm(mesh, f, 2, 8);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const Vertices3 v = triangle_vertices(mesh, t);
      const Point p = (0.2 * v[0] + 0.3 * v[1] + 0.5 * v[2]);
      CHECK((field(t, p) - f(p)).norm() <= 1e-12);
    }
  }
  SUBCASE("degenerate elements are structural errors") {
    const SimplicialMesh flat({{0, 0}, {1, 0}, {0, 1e-200}}, {{0, 1, 2}});
    CHECK_THROWS_AS(project_PiHm(flat, [](const Point&) { return Point(1.0, 0.0); }, 1, 4), StructuralError);
  }
}

TEST_CASE("projection of the experiment source matches a symbolic oracle") {
  // exact P1 L2 projection of (-y, x^4) on the triangle below, evaluated at
  // (0.3, 0.2); computed symbolically with sympy
  const double oracle_x = -0.2;
  const double oracle_y = 0.011696347402597402597;
  const SimplicialMesh tri({{0.25, 0.0}, {0.5, 0.25}, {0.1, 0.4}}, {{0, 1, 2}});
  const auto field =
      project_PiHm(tri, [](const Point& x) { return Point(-x.y(), std::pow(x.x(), 4)); }, 1, 10);
  const Point val = field(0, Point(0.3, 0.2));
  CHECK(val.x() == doctest::Approx(oracle_x).epsilon(1e-10));
  CHECK(val.y() == doctest::Approx(oracle_y).epsilon(1e-10));
}

TEST_CASE("local pressure lift") {
  const Vertices3 v = {Point(0.1, 0.2), Point(0.6, 0.3), Point(0.3, 0.7)};
  SUBCASE("gradient field: q = 0 and p_loc = phi - mean") {
    const ElementPolyBasis b = build_element_basis(0, v, 1);
    const double xT = b.frame.center.x();
    VectorPoly f(b.frame, 1);  // ∇(x - x_T)^2 = (2 (x - x_T), 0)
    f.x.coeff(1, 0) = 2.0 * b.frame.scale;
    const PressureLift lift = local_pressure_lift(f, b, v);
    CHECK(lift.q.x.coeffs().norm() + lift.q.y.coeffs().norm() < 1e-13);
    auto phi = [&](const Point& x) { return (x.x() - xT) * (x.x() - xT); };
    const double area = integrate_triangle(v, 0, [](const Point&) { return 1.0; });
    const double mean = integrate_triangle(v, 2, phi) / area;
    for (const Point& p : {v[0], v[1], v[2], b.frame.center}) {
      CHECK(lift.p_loc(p) == doctest::Approx(phi(p) - mean).epsilon(1e-12));
    }
  }
  SUBCASE("complement field: p_loc = 0") {
    const ElementPolyBasis b = build_element_basis(0, v, 2);
    const PressureLift lift = local_pressure_lift(b.complement_function(2), b, v);
    CHECK(lift.p_loc.coeffs().norm() < 1e-13);
  }
  SUBCASE("random m = 2 residual") {
    std::mt19937_64 rng(3);
    const ElementPolyBasis b = build_element_basis(0, v, 2);
    for (int trial = 0; trial < 50; ++trial) {
      const VectorPoly f = random_poly(b.frame, 2, rng);
      const PressureLift lift = local_pressure_lift(f, b, v);
      // compare ∇p_loc + q with f at more points than coefficients
      double err = 0.0;
      for (int i = 0; i <= 4; ++i) {
        for (int j = 0; i + j <= 4; ++j) {
          const Point x = v[0] + 0.25 * i * (v[1] - v[0]) + 0.25 * j * (v[2] - v[0]);
          err = std::max(err, (lift.p_loc.gradient(x) + lift.q(x) - f(x)).lpNorm<Eigen::Infinity>());
        }
      }
      CHECK(err <= 1e-11);
      CHECK(std::abs(integrate_triangle(v, 3, [&](const Point& x) { return lift.p_loc(x); })) <= 1e-13);
    }
  }
}

TEST_CASE("face bases: shifted Legendre, orthogonal, unit first function") {
  RefinementChain chain(2);
  const SimplicialMesh& mesh = chain.level(2);
  for (int f = 0; f < mesh.num_faces(); f += 3) {
    const FacePolyBasis b = build_face_basis(mesh, f, 3);
    CHECK(b.size() == 4);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        double sum = 0.0;
        for (const auto& q : line_rule(8)) sum += q.weight * b.length * b.value(i, q.t) * b.value(j, q.t);
        const double expected = i == j ? b.gram(i) : 0.0;
        CHECK(std::abs(sum - expected) <= 1e-12);
      }
    }
    double integral = 0.0;
    for (const auto& q : line_rule(2)) integral += q.weight * b.length * b.value(0, q.t);
    CHECK(integral == doctest::Approx(b.length).epsilon(1e-14));
  }
}
