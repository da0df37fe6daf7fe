#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "msstokes/mesh.hpp"

using namespace msstokes;

namespace {

double signed_area(const SimplicialMesh& m, int t) {
  const auto& tri = m.triangle(t);
  const Point a = m.vertex(tri[1]) - m.vertex(tri[0]);
  const Point b = m.vertex(tri[2]) - m.vertex(tri[0]);
  return 0.5 * (a.x() * b.y() - a.y() * b.x());
}

void check_valid(const SimplicialMesh& m) {
  double total = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    CHECK(signed_area(m, t) > 0.0);
    total += signed_area(m, t);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<int> incidences(m.num_faces(), 0);
  for (int t = 0; t < m.num_triangles(); ++t) {
    for (int f : m.element_faces(t)) ++incidences[f];
  }
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& face = m.face(f);
    CHECK(incidences[f] == (face.boundary() ? 1 : 2));
    CHECK(face.normal.norm() == doctest::Approx(1.0).epsilon(1e-14));
    if (!face.boundary()) CHECK(face.elements[0] < face.elements[1]);
  }
}

}  // namespace

TEST_CASE("unit square has two triangles and one interior face") {
  const SimplicialMesh m = SimplicialMesh::unit_square();
  CHECK(m.num_triangles() == 2);
  CHECK(m.interior_faces().size() == 1);
  check_valid(m);
}

TEST_CASE("red refinement counts and area") {
  const SimplicialMesh m0 = SimplicialMesh::unit_square();
  const RefinedMesh r1 = red_refine(m0);
  CHECK(r1.mesh.num_triangles() == 8);
  const RefinedMesh r2 = red_refine(r1.mesh);
  CHECK(r2.mesh.num_triangles() == 32);
  check_valid(r1.mesh);
  check_valid(r2.mesh);
  for (int t = 0; t < r2.mesh.num_triangles(); ++t) CHECK(r2.parent[t] == t / 4);
  // structured H = 1/2 mesh: (24 incidences - 8 boundary edges) / 2
  CHECK(r1.mesh.interior_faces().size() == 8);
}

TEST_CASE("red refinement conformity: midpoints shared by exactly the children on that edge") {
  const SimplicialMesh m = red_refine(red_refine(SimplicialMesh::unit_square()).mesh).mesh;
  const RefinedMesh r = red_refine(m);
  for (const Face& f : m.faces()) {
    const Point mid = 0.5 * (m.vertex(f.vertices[0]) + m.vertex(f.vertices[1]));
    int owner = -1;
    for (int v = 0; v < r.mesh.num_vertices(); ++v) {
      if ((r.mesh.vertex(v) - mid).norm() < 1e-12) owner = v;
    }
    REQUIRE(owner >= 0);
    std::set<int> parents;
    for (int t : r.mesh.vertex_elements(owner)) parents.insert(r.parent[t]);
    std::set<int> expected{f.elements[0]};
    if (!f.boundary()) expected.insert(f.elements[1]);
    CHECK(parents == expected);
  }
}

TEST_CASE("barycentric refinement") {
  const SimplicialMesh m = red_refine(SimplicialMesh::unit_square()).mesh;
  const RefinedMesh b = barycentric_refine(m);
  CHECK(b.mesh.num_triangles() == 24);
  check_valid(b.mesh);
  for (int t = 0; t < m.num_triangles(); ++t) {
    CHECK((b.mesh.vertex(m.num_vertices() + t) - m.centroid(t)).norm() < 1e-15);
    for (int c = 0; c < 3; ++c) {
      CHECK(b.parent[3 * t + c] == t);
      // children's minimum angle stays above a fixed fraction of the parent's
      CHECK(b.mesh.min_angle(3 * t + c) >= 0.25 * m.min_angle(t));
    }
  }
}

TEST_CASE("non-manifold edge is a structural error") {
  std::vector<Point> v{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, -1}};
  std::vector<std::array<int, 3>> t{{0, 1, 2}, {1, 3, 2}, {0, 4, 1}, {0, 1, 3}};
  CHECK_THROWS_AS(SimplicialMesh(v, t), StructuralError);
}

TEST_CASE("hierarchy compatibility and mesh sizes") {
  auto chain = std::make_shared<const RefinementChain>(3);
  const auto fine = make_fine_mesh(*chain, 3);
  for (int level = 0; level <= 2; ++level) {
    const MeshHierarchy h(chain, level, 3, fine);
    CHECK(h.H() == doctest::Approx(std::sqrt(2.0) * std::ldexp(1.0, -level)));
    CHECK(h.h() == doctest::Approx(fine->h_max()));
    for (int t = 0; t < fine->num_triangles(); ++t) {
      const int K = h.coarse_parent(t);
      for (int v : fine->triangle(t)) CHECK(h.coarse().contains(K, fine->vertex(v), 1e-12));
    }
    std::size_t total = 0;
    for (int K = 0; K < h.coarse().num_triangles(); ++K) total += h.fine_elements(K).size();
    CHECK(total == static_cast<std::size_t>(fine->num_triangles()));
  }
}

TEST_CASE("patches: first order, recursion, monotonicity, symmetry, saturation") {
  RefinementChain chain(3);
  const SimplicialMesh& m = chain.level(3);
  CHECK_THROWS_AS(make_patch(m, 0, 0), ValidationError);
  for (int T = 0; T < m.num_triangles(); ++T) {
    const Patch p1 = make_patch(m, T, 1);
    std::set<int> touching;
    for (int v : m.triangle(T)) {
      for (int K : m.vertex_elements(v)) touching.insert(K);
    }
    CHECK(std::set<int>(p1.elements.begin(), p1.elements.end()) == touching);
    for (int K : p1.elements) {
      const Patch back = make_patch(m, K, 1);
      CHECK(std::binary_search(back.elements.begin(), back.elements.end(), T));
    }
    std::vector<int> prev = p1.elements;
    for (int l = 2; l <= 5; ++l) {
      const Patch pl = make_patch(m, T, l);
      CHECK(pl.elements == grow_elements(m, prev));
      CHECK(std::includes(pl.elements.begin(), pl.elements.end(), prev.begin(), prev.end()));
      prev = pl.elements;
    }
  }
  const int sat = saturation_order(m);
  for (int T = 0; T < m.num_triangles(); ++T) {
    const Patch p = make_patch(m, T, sat);
    CHECK(p.covers_domain);
    CHECK(p.elements.size() == static_cast<std::size_t>(m.num_triangles()));
  }
  bool some_smaller = false;
  for (int T = 0; T < m.num_triangles(); ++T) some_smaller |= !make_patch(m, T, sat - 1).covers_domain;
  CHECK(some_smaller);
}

TEST_CASE("patch interior faces have both neighbours inside") {
  RefinementChain chain(2);
  const SimplicialMesh& m = chain.level(2);
  const Patch p = make_patch(m, 5, 1);
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& face = m.face(f);
    const bool inside = !face.boundary() && p.contains(face.elements[0]) && p.contains(face.elements[1]);
    CHECK(std::binary_search(p.interior_faces.begin(), p.interior_faces.end(), f) == inside);
  }
}

TEST_CASE("mesh dump lists counts, vertices, then triangles") {
  const SimplicialMesh m = SimplicialMesh::unit_square();
  std::ostringstream os;
  m.write(os);
  std::istringstream is(os.str());
  std::vector<double> numbers;
  double x;
  while (is >> x) numbers.push_back(x);
  CHECK(numbers.size() == 2 + 4 * 2 + 2 * 3);
  CHECK(numbers[0] == 4);
  CHECK(numbers[1] == 2);
}
