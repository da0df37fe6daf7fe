#include "msstokes/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>

namespace msstokes {

namespace {

double signed_area(const Point& a, const Point& b, const Point& c) {
  return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

}  // namespace

SimplicialMesh::SimplicialMesh(std::vector<Point> vertices,
                               std::vector<std::array<int, 3>> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  for (int t = 0; t < num_triangles(); ++t) {
    for (int v : triangles_[t]) {
      if (v < 0 || v >= num_vertices()) {
        throw StructuralError("triangle " + std::to_string(t) + " references a missing vertex");
      }
    }
    if (!(area(t) > 0.0)) {
      throw StructuralError("triangle " + std::to_string(t) + " has non-positive signed area");
    }
  }
  build_faces();
}

SimplicialMesh SimplicialMesh::unit_square() {
  return SimplicialMesh({Point(0, 0), Point(1, 0), Point(1, 1), Point(0, 1)},
                        {{{0, 1, 2}}, {{0, 2, 3}}});
}

void SimplicialMesh::build_faces() {
  std::map<std::pair<int, int>, int> lookup;
  element_faces_.assign(triangles_.size(), {-1, -1, -1});
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tri = triangles_[t];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k];
      const int b = tri[(k + 1) % 3];
      const auto key = std::minmax(a, b);
      auto [it, inserted] = lookup.try_emplace({key.first, key.second}, num_faces());
      if (inserted) {
        Face f;
        f.vertices = {a, b};
        f.elements = {t, -1};
        faces_.push_back(f);
      } else {
        Face& f = faces_[it->second];
        if (f.elements[1] >= 0) {
          throw StructuralError("non-manifold edge (" + std::to_string(a) + ", " +
                                std::to_string(b) + ") shared by more than two triangles");
        }
        f.elements[1] = t;
      }
      element_faces_[t][k] = it->second;
    }
  }

  vertex_elements_.assign(vertices_.size(), {});
  vertex_faces_.assign(vertices_.size(), {});
  boundary_vertex_.assign(vertices_.size(), false);
  for (int t = 0; t < num_triangles(); ++t) {
    for (int v : triangles_[t]) vertex_elements_[v].push_back(t);
  }
  interior_ordinal_.assign(faces_.size(), -1);
  for (int fi = 0; fi < num_faces(); ++fi) {
    Face& f = faces_[fi];
    const Point a = vertices_[f.vertices[0]];
    const Point b = vertices_[f.vertices[1]];
    const Point d = b - a;
    f.length = d.norm();
    Point n(d.y(), -d.x());
    n /= f.length;
    if (f.elements[1] >= 0 && f.elements[1] < f.elements[0]) std::swap(f.elements[0], f.elements[1]);
    // Orient away from elements[0].
    const Point c = centroid(f.elements[0]);
    if (n.dot(c - a) > 0.0) n = -n;
    f.normal = n;
    vertex_faces_[f.vertices[0]].push_back(fi);
    vertex_faces_[f.vertices[1]].push_back(fi);
    if (f.boundary()) {
      boundary_vertex_[f.vertices[0]] = true;
      boundary_vertex_[f.vertices[1]] = true;
    } else {
      interior_ordinal_[fi] = static_cast<int>(interior_faces_.size());
      interior_faces_.push_back(fi);
    }
  }
}

double SimplicialMesh::area(int t) const {
  const auto& tri = triangles_[t];
  return signed_area(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
}

double SimplicialMesh::diameter(int t) const {
  const auto& tri = triangles_[t];
  double d = 0.0;
  for (int k = 0; k < 3; ++k) {
    d = std::max(d, (vertices_[tri[k]] - vertices_[tri[(k + 1) % 3]]).norm());
  }
  return d;
}

Point SimplicialMesh::centroid(int t) const {
  const auto& tri = triangles_[t];
  return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
}

double SimplicialMesh::min_angle(int t) const {
  const auto& tri = triangles_[t];
  double result = std::numbers::pi;
  for (int k = 0; k < 3; ++k) {
    const Point a = vertices_[tri[(k + 1) % 3]] - vertices_[tri[k]];
    const Point b = vertices_[tri[(k + 2) % 3]] - vertices_[tri[k]];
    const double cosine = a.dot(b) / (a.norm() * b.norm());
    result = std::min(result, std::acos(std::clamp(cosine, -1.0, 1.0)));
  }
  return result;
}

double SimplicialMesh::total_area() const {
  double sum = 0.0;
  for (int t = 0; t < num_triangles(); ++t) sum += area(t);
  return sum;
}

double SimplicialMesh::h_max() const {
  double h = 0.0;
  for (int t = 0; t < num_triangles(); ++t) h = std::max(h, diameter(t));
  return h;
}

bool SimplicialMesh::contains(int t, const Point& p, double tol) const {
  const auto& tri = triangles_[t];
  for (int k = 0; k < 3; ++k) {
    const Point& a = vertices_[tri[k]];
    const Point& b = vertices_[tri[(k + 1) % 3]];
    if (signed_area(a, b, p) < -tol) return false;
  }
  return true;
}

void SimplicialMesh::write(std::ostream& os) const {
  os.precision(17);
  os << num_vertices() << ' ' << num_triangles() << '\n';
  for (const auto& v : vertices_) os << v.x() << ' ' << v.y() << '\n';
  for (const auto& t : triangles_) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

RefinedMesh red_refine(const SimplicialMesh& mesh) {
  std::vector<Point> vertices = mesh.vertices();
  const int nv = mesh.num_vertices();
  for (const Face& f : mesh.faces()) {
    vertices.push_back(0.5 * (mesh.vertex(f.vertices[0]) + mesh.vertex(f.vertices[1])));
  }
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> parent;
  triangles.reserve(4 * mesh.num_triangles());
  parent.reserve(4 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& v = mesh.triangle(t);
    const auto& e = mesh.element_faces(t);
    const int m01 = nv + e[0];
    const int m12 = nv + e[1];
    const int m20 = nv + e[2];
    triangles.push_back({v[0], m01, m20});
    triangles.push_back({m01, v[1], m12});
    triangles.push_back({m20, m12, v[2]});
    triangles.push_back({m01, m12, m20});
    parent.insert(parent.end(), 4, t);
  }
  return {SimplicialMesh(std::move(vertices), std::move(triangles)), std::move(parent)};
}

RefinedMesh barycentric_refine(const SimplicialMesh& mesh) {
  std::vector<Point> vertices = mesh.vertices();
  const int nv = mesh.num_vertices();
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> parent;
  triangles.reserve(3 * mesh.num_triangles());
  parent.reserve(3 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    vertices.push_back(mesh.centroid(t));
    const auto& v = mesh.triangle(t);
    const int c = nv + t;
    triangles.push_back({v[0], v[1], c});
    triangles.push_back({v[1], v[2], c});
    triangles.push_back({v[2], v[0], c});
    parent.insert(parent.end(), 3, t);
  }
  return {SimplicialMesh(std::move(vertices), std::move(triangles)), std::move(parent)};
}

RefinementChain::RefinementChain(int max_level) {
  if (max_level < 0) throw ValidationError("refinement level must be non-negative");
  levels_.push_back(SimplicialMesh::unit_square());
  parents_.emplace_back();
  for (int l = 1; l <= max_level; ++l) {
    auto refined = red_refine(levels_.back());
    levels_.push_back(std::move(refined.mesh));
    parents_.push_back(std::move(refined.parent));
  }
}

int RefinementChain::ancestor(int from, int t, int to) const {
  if (to > from) throw ValidationError("ancestor level must not exceed the source level");
  for (int l = from; l > to; --l) t = parents_[l][t];
  return t;
}

std::shared_ptr<const SimplicialMesh> make_fine_mesh(const RefinementChain& chain,
                                                     int fine_level) {
  return std::make_shared<const SimplicialMesh>(barycentric_refine(chain.level(fine_level)).mesh);
}

MeshHierarchy::MeshHierarchy(std::shared_ptr<const RefinementChain> chain, int coarse_level,
                             int fine_level, std::shared_ptr<const SimplicialMesh> fine)
    : chain_(std::move(chain)), coarse_level_(coarse_level), fine_level_(fine_level) {
  if (coarse_level < 0 || fine_level < coarse_level || fine_level > chain_->max_level()) {
    throw ValidationError("invalid coarse/fine levels for mesh hierarchy");
  }
  fine_ = fine ? std::move(fine) : make_fine_mesh(*chain_, fine_level);
  const int nfine = fine_->num_triangles();
  if (nfine != 3 * chain_->level(fine_level).num_triangles()) {
    throw StructuralError("fine mesh is not the barycentric refinement of the fine level");
  }
  coarse_parent_.resize(nfine);
  fine_elements_.assign(coarse().num_triangles(), {});
  for (int t = 0; t < nfine; ++t) {
    coarse_parent_[t] = chain_->ancestor(fine_level, t / 3, coarse_level);
    fine_elements_[coarse_parent_[t]].push_back(t);
  }
  H_ = coarse().h_max();
  h_ = fine_->h_max();
}

MeshHierarchy::MeshHierarchy(int coarse_level, int fine_level)
    : MeshHierarchy(std::make_shared<const RefinementChain>(fine_level), coarse_level,
                    fine_level) {}

int MeshHierarchy::red_ancestor(int fine_triangle, int l) const {
  return chain_->ancestor(fine_level_, fine_triangle / 3, l);
}

bool Patch::contains(int t) const { return std::binary_search(elements.begin(), elements.end(), t); }

std::vector<int> grow_elements(const SimplicialMesh& mesh, const std::vector<int>& elements) {
  std::vector<char> in(mesh.num_triangles(), 0);
  for (int t : elements) {
    for (int v : mesh.triangle(t)) {
      for (int k : mesh.vertex_elements(v)) in[k] = 1;
    }
  }
  std::vector<int> out;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (in[t]) out.push_back(t);
  }
  return out;
}

Patch make_patch(const SimplicialMesh& mesh, int seed, int order) {
  if (order < 1) throw ValidationError("patch order must be at least 1");
  if (seed < 0 || seed >= mesh.num_triangles()) throw ValidationError("patch seed out of range");
  Patch patch;
  patch.seed = seed;
  patch.order = order;
  patch.elements = {seed};
  for (int l = 0; l < order; ++l) {
    auto grown = grow_elements(mesh, patch.elements);
    const bool saturated = grown.size() == patch.elements.size();
    patch.elements = std::move(grown);
    if (saturated) break;
  }
  patch.covers_domain = static_cast<int>(patch.elements.size()) == mesh.num_triangles();
  std::vector<char> in(mesh.num_triangles(), 0);
  for (int t : patch.elements) in[t] = 1;
  for (int f : mesh.interior_faces()) {
    const Face& face = mesh.face(f);
    if (in[face.elements[0]] && in[face.elements[1]]) patch.interior_faces.push_back(f);
  }
  return patch;
}

int saturation_order(const SimplicialMesh& mesh) {
  int result = 1;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    std::vector<int> set = {t};
    int order = 0;
    while (static_cast<int>(set.size()) < mesh.num_triangles()) {
      set = grow_elements(mesh, set);
      ++order;
    }
    result = std::max(result, order);
  }
  return result;
}

}  // namespace msstokes
