#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "msstokes/common.hpp"
#include "msstokes/polyspaces.hpp"

namespace msstokes {

class FineSpace;
class MeshHierarchy;
class SimplicialMesh;
struct Patch;

/// Barycentric coordinates of x with respect to a triangle.
Eigen::Vector3d barycentric_coordinates(const Vertices3& v, const Point& x);

/// Lagrange multipliers for the face and element QOIs of a coarse mesh.
/// Face multipliers come first (interior-face ordinal * J + j), followed by
/// element multipliers (offset + T * K + k). Indices j and k are 0-based.
class MultiplierSpace {
 public:
  MultiplierSpace(const MeshHierarchy& hierarchy, int m);

  int degree() const { return m_; }
  int J() const { return m_ + 1; }
  int K() const { return complement_dimension(m_); }
  double H() const { return H_; }
  int num_face_multipliers() const { return num_interior_faces_ * J(); }
  int size() const { return num_face_multipliers() + num_elements_ * K(); }

  /// Multiplier of (coarse face, j); throws for boundary faces.
  int face_index(int face, int j) const;
  int element_index(int element, int k) const;

  struct Entry {
    bool face;
    int entity;  // coarse face or element index
    int local;   // j or k
  };
  Entry decode(int index) const;

  const FacePolyBasis& face_basis(int face) const { return face_bases_[face]; }
  const ElementPolyBasis& element_basis(int element) const { return element_bases_[element]; }
  /// ∫_T p_{T,k} · p_{T,k'} on one element.
  const Eigen::MatrixXd& element_gram(int element) const { return element_grams_[element]; }

  /// Multipliers of M_{H,T}^ℓ: faces inside the patch and its elements.
  std::vector<int> patch_indices(const Patch& patch) const;

  /// Target Gram block: c(φ, 𝛍) of a basis function against its own multipliers.
  /// Faces: H |F| / (2j + 1); elements: ∫_T p_{T,k} · p_{T,k'}.
  SparseMatrix target_gram() const;
  /// ‖𝛍‖²_{M_H} = H ‖μ‖²_Σ + ‖𝛍‖²_Ω of a coefficient vector.
  double norm(const Vector& mu) const;

 private:
  const SimplicialMesh* coarse_;
  int m_;
  double H_;
  int num_interior_faces_;
  int num_elements_;
  std::vector<FacePolyBasis> face_bases_;
  std::vector<ElementPolyBasis> element_bases_;
  std::vector<Eigen::MatrixXd> element_grams_;
};

/// κ_T|_F per coarse face and adjacent-element slot (Face::elements order).
struct KappaTable {
  std::vector<std::array<double, 2>> weights;

  static KappaTable uniform(const SimplicialMesh& coarse);
  /// Nonnegative, sum to one over the elements of every interior face.
  void validate(const SimplicialMesh& coarse) const;
  double weight(const SimplicialMesh& coarse, int face, int element) const;
};

/// A fine edge lying on a coarse face, with a fine triangle containing it.
struct FaceSegment {
  int fine_face;
  int fine_triangle;
};

/// QOI machinery on a fixed hierarchy, fine space and order m.
class QoiSystem {
 public:
  QoiSystem(const MeshHierarchy& hierarchy, const FineSpace& space, int m);

  const MeshHierarchy& hierarchy() const { return *hierarchy_; }
  const FineSpace& space() const { return *space_; }
  const MultiplierSpace& multipliers() const { return multipliers_; }

  /// Rows: multipliers; columns: fine velocity dofs.
  const SparseMatrix& c() const { return c_; }
  /// Weighted one-element form c_T with the same row/column layout as c().
  SparseMatrix assemble_cT(int element, const KappaTable& kappa) const;

  Vector qoi_of(const Vector& v) const { return c_ * v; }
  /// |F|^{-1} ∫_F v · n per coarse face (zero on boundary faces).
  Vector average_fluxes(const Vector& v) const;

  const std::vector<FaceSegment>& segments(int coarse_face) const { return segments_[coarse_face]; }

 private:
  SparseMatrix assemble(const std::vector<double>& face_weight, const std::vector<int>& elements) const;

  const MeshHierarchy* hierarchy_;
  const FineSpace* space_;
  MultiplierSpace multipliers_;
  std::vector<std::vector<FaceSegment>> segments_;
  SparseMatrix c_;
};

/// Matrix of c(v, 𝛍); same as QoiSystem::c().
SparseMatrix assemble_c(const QoiSystem& qoi);

/// Nodal quasi-interpolation onto continuous P1 fields determined by the
/// average normal fluxes over interior faces.
class QuasiInterpolant {
 public:
  struct NodePair {
    std::array<int, 2> faces;
    Eigen::Matrix2d inverse;  // maps the two average fluxes to the nodal value
    double det;
  };

  explicit QuasiInterpolant(const SimplicialMesh& coarse, double min_det = 0.1);

  /// Selected faces at vertex z, empty for boundary vertices.
  const std::optional<NodePair>& pair(int z) const { return pairs_[z]; }
  /// Nodal values from average fluxes indexed by coarse face.
  std::vector<Point> apply(const Vector& average_flux) const;
  /// θ_z for the face basis function (F, j): fluxes δ_EF δ_j0.
  std::vector<Point> nodal_lift(int face, int j) const;

 private:
  std::vector<std::optional<NodePair>> pairs_;
};

std::vector<Point> coarse_nodal_lift(const QuasiInterpolant& ih, int face, int j);

/// Fine P2 representation of coarse P1 vector fields: columns 2z + d hold
/// Λ_z e_d (Dirichlet nodes dropped).
SparseMatrix coarse_p1_prolongation(const MeshHierarchy& hierarchy, const FineSpace& space);
Vector nodal_vector(const std::vector<Point>& values);

/// I_H v as nodal values on the coarse mesh.
std::vector<Point> interp_IH(const QoiSystem& qoi, const QuasiInterpolant& ih, const Vector& v);

}  // namespace msstokes
