#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <vector>

#include "msstokes/common.hpp"

namespace msstokes {

/// An edge of a triangulation. Interior faces carry a unit normal pointing
/// from `elements[0]` into `elements[1]`, where elements[0] < elements[1].
/// Boundary faces carry the outward normal and elements[1] == -1.
struct Face {
  std::array<int, 2> vertices;
  std::array<int, 2> elements{-1, -1};
  Point normal = Point::Zero();
  double length = 0.0;

  bool boundary() const { return elements[1] < 0; }
};

/// Conforming triangulation of a polygonal domain. Immutable after
/// construction; triangles are stored counter-clockwise.
class SimplicialMesh {
 public:
  SimplicialMesh() = default;
  SimplicialMesh(std::vector<Point> vertices, std::vector<std::array<int, 3>> triangles);

  /// The unit square split by the diagonal (0,0)-(1,1).
  static SimplicialMesh unit_square();

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_faces() const { return static_cast<int>(faces_.size()); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const Point& vertex(int v) const { return vertices_[v]; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
  const std::vector<Face>& faces() const { return faces_; }
  const Face& face(int f) const { return faces_[f]; }

  /// Local edge k of triangle t joins local vertices k and (k+1)%3.
  const std::array<int, 3>& element_faces(int t) const { return element_faces_[t]; }
  const std::vector<int>& vertex_elements(int v) const { return vertex_elements_[v]; }
  const std::vector<int>& vertex_faces(int v) const { return vertex_faces_[v]; }
  bool boundary_vertex(int v) const { return boundary_vertex_[v]; }

  /// Interior faces in increasing face index order.
  const std::vector<int>& interior_faces() const { return interior_faces_; }
  /// Position of face f in interior_faces(), or -1 for boundary faces.
  int interior_face_ordinal(int f) const { return interior_ordinal_[f]; }

  double area(int t) const;
  double diameter(int t) const;
  Point centroid(int t) const;
  double min_angle(int t) const;
  double total_area() const;
  /// Maximum element diameter.
  double h_max() const;
  bool contains(int t, const Point& p, double tol = 1e-12) const;

  /// Plain-text dump: vertices (x y), then triangles (i j k), 0-based.
  void write(std::ostream& os) const;

 private:
  void build_faces();

  std::vector<Point> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<Face> faces_;
  std::vector<std::array<int, 3>> element_faces_;
  std::vector<std::vector<int>> vertex_elements_;
  std::vector<std::vector<int>> vertex_faces_;
  std::vector<bool> boundary_vertex_;
  std::vector<int> interior_faces_;
  std::vector<int> interior_ordinal_;
};

/// A refined mesh together with the parent element of every child.
struct RefinedMesh {
  SimplicialMesh mesh;
  std::vector<int> parent;
};

/// Uniform red refinement: four congruent children per triangle via the edge
/// midpoints. Children 4t..4t+3 belong to parent t.
RefinedMesh red_refine(const SimplicialMesh& mesh);

/// Barycentric (Alfeld) refinement: three children per triangle sharing its
/// barycenter. Children 3t..3t+2 belong to parent t; the barycenter of t is
/// vertex num_vertices() + t of the refined mesh.
RefinedMesh barycentric_refine(const SimplicialMesh& mesh);

/// Nested red-refined meshes T_{2^0}, T_{2^-1}, ..., T_{2^-L} of the unit
/// square with the parent maps between consecutive levels.
class RefinementChain {
 public:
  explicit RefinementChain(int max_level);

  int max_level() const { return static_cast<int>(levels_.size()) - 1; }
  const SimplicialMesh& level(int l) const { return levels_.at(l); }
  /// Parent in level l-1 of triangle t of level l.
  int parent(int l, int t) const { return parents_.at(l)[t]; }
  /// Ancestor at level `to` of triangle t of level `from` (to <= from).
  int ancestor(int from, int t, int to) const;

 private:
  std::vector<SimplicialMesh> levels_;
  std::vector<std::vector<int>> parents_;
};

/// Coarse mesh T_H together with a compatible fine mesh T_h, the latter being
/// the barycentric refinement of a red-refined descendant of T_H.
class MeshHierarchy {
 public:
  MeshHierarchy(std::shared_ptr<const RefinementChain> chain, int coarse_level,
                int fine_level, std::shared_ptr<const SimplicialMesh> fine = nullptr);
  MeshHierarchy(int coarse_level, int fine_level);

  const SimplicialMesh& coarse() const { return chain_->level(coarse_level_); }
  const SimplicialMesh& fine() const { return *fine_; }
  std::shared_ptr<const SimplicialMesh> fine_ptr() const { return fine_; }
  const RefinementChain& chain() const { return *chain_; }
  std::shared_ptr<const RefinementChain> chain_ptr() const { return chain_; }

  int coarse_level() const { return coarse_level_; }
  int fine_level() const { return fine_level_; }
  double H() const { return H_; }
  double h() const { return h_; }

  int coarse_parent(int fine_triangle) const { return coarse_parent_[fine_triangle]; }
  const std::vector<int>& fine_elements(int coarse_triangle) const {
    return fine_elements_[coarse_triangle];
  }
  /// Ancestor of a fine triangle in the red-refined mesh of level l
  /// (l <= fine_level).
  int red_ancestor(int fine_triangle, int l) const;

 private:
  std::shared_ptr<const RefinementChain> chain_;
  int coarse_level_;
  int fine_level_;
  std::shared_ptr<const SimplicialMesh> fine_;
  std::vector<int> coarse_parent_;
  std::vector<std::vector<int>> fine_elements_;
  double H_ = 0.0;
  double h_ = 0.0;
};

/// The barycentric refinement of red level `fine_level`, shared between
/// hierarchies with different coarse levels.
std::shared_ptr<const SimplicialMesh> make_fine_mesh(const RefinementChain& chain, int fine_level);

/// ℓ-th order element patch N^ℓ(T) of a coarse element.
struct Patch {
  int seed = -1;
  int order = 0;
  std::vector<int> elements;        // sorted coarse element indices
  std::vector<int> interior_faces;  // interior mesh faces with both neighbours inside
  bool covers_domain = false;

  bool contains(int t) const;
};

/// N^ℓ(T): elements reachable from T in ℓ vertex-sharing steps. ℓ >= 1.
Patch make_patch(const SimplicialMesh& mesh, int seed, int order);
/// One step of vertex-neighbour growth of an element set (sorted output).
std::vector<int> grow_elements(const SimplicialMesh& mesh, const std::vector<int>& elements);
/// Smallest ℓ for which every element patch covers the whole mesh.
int saturation_order(const SimplicialMesh& mesh);

}  // namespace msstokes
