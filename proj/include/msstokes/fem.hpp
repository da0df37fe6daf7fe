#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/UmfPackSupport>

#include "msstokes/common.hpp"
#include "msstokes/polyspaces.hpp"

namespace msstokes {

class SimplicialMesh;

/// Continuous P2 velocity / discontinuous P1 pressure on one fine mesh.
///
/// Nodes are the mesh vertices followed by one node per face (edge midpoint).
/// Only interior nodes carry velocity dofs, numbered 2 * node_dof + component.
/// Pressure dof 3t + i is the coefficient of the barycentric coordinate λ_i of
/// triangle t.
class FineSpace {
 public:
  explicit FineSpace(std::shared_ptr<const SimplicialMesh> mesh);

  const SimplicialMesh& mesh() const { return *mesh_; }
  std::shared_ptr<const SimplicialMesh> mesh_ptr() const { return mesh_; }

  int num_nodes() const { return static_cast<int>(node_dof_.size()); }
  int num_velocity_dofs() const { return 2 * num_free_nodes_; }
  int num_pressure_dofs() const { return 3 * num_triangles_; }

  /// Node of triangle t: 0..2 vertices, 3 + k the midpoint of local edge k.
  std::array<int, 6> element_nodes(int t) const;
  /// Velocity dof of (node, component), -1 on the Dirichlet boundary.
  int velocity_dof(int node, int comp) const {
    const int d = node_dof_[node];
    return d < 0 ? -1 : 2 * d + comp;
  }
  Point node_point(int node) const;

  /// Nodal velocity values on triangle t (zero on boundary nodes).
  std::array<Point, 6> element_values(const Vector& u, int t) const;
  Point evaluate(const Vector& u, int t, const Eigen::Vector3d& bary) const;
  Eigen::Matrix2d gradient(const Vector& u, int t, const Eigen::Vector3d& bary) const;
  double evaluate_pressure(const Vector& p, int t, const Eigen::Vector3d& bary) const {
    return p[3 * t] * bary[0] + p[3 * t + 1] * bary[1] + p[3 * t + 2] * bary[2];
  }

  /// Fine velocity vector with nodal values of f (exact for f ∈ P2 per element).
  Vector interpolate(const VectorFunction& f) const;

 private:
  std::shared_ptr<const SimplicialMesh> mesh_;
  std::vector<int> node_dof_;
  int num_free_nodes_ = 0;
  int num_triangles_ = 0;
};

/// Quadratic Lagrange shape values at barycentric coordinates, nodes as in
/// FineSpace::element_nodes.
std::array<double, 6> p2_shape(const Eigen::Vector3d& bary);
/// Gradients of the quadratic shape functions on a triangle.
std::array<Point, 6> p2_shape_gradients(const Vertices3& v, const Eigen::Vector3d& bary);
/// Barycentric gradients ∇λ_i of a triangle.
std::array<Point, 3> barycentric_gradients(const Vertices3& v);
/// Scalar P2 stiffness ∫ ∇φ_a · ∇φ_b on one triangle.
Eigen::Matrix<double, 6, 6> p2_local_stiffness(const Vertices3& v);

/// Piecewise constant ν and σ on the fine mesh with generation metadata.
struct CoefficientField {
  Vector nu;
  Vector sigma;
  std::uint64_t seed = 0;
  double eps = 0.0;
  std::string description;

  static CoefficientField constant(int num_triangles, double nu, double sigma = 0.0);
  void validate(int num_triangles) const;
};

/// Matrix of a(u, v) = (ν∇u, ∇v) + (σu, v) on the velocity dofs.
SparseMatrix assemble_a(const FineSpace& space, const CoefficientField& coeff);
/// Matrix of b(u, q) = -(q, div u); rows are pressure dofs.
SparseMatrix assemble_b(const FineSpace& space);
/// a and b restricted to a set of fine triangles, applied to a velocity vector.
Vector apply_a_on(const FineSpace& space, const CoefficientField& coeff,
                  const std::vector<int>& triangles, const Vector& u);
Vector apply_b_on(const FineSpace& space, const std::vector<int>& triangles, const Vector& u);

/// Block-diagonal P1-discontinuous mass matrix.
SparseMatrix pressure_mass(const FineSpace& space);
/// ∫ q for each pressure basis function.
Vector pressure_mean_weights(const FineSpace& space);
/// Load vector (f, φ) with a rule exact to `quad_degree` + 2.
Vector assemble_load(const FineSpace& space, const VectorFunction& f, int quad_degree = 8);

/// Sparse LU of a saddle-point matrix; throws SolverError on failure.
class SaddleFactorization {
 public:
  SaddleFactorization() = default;
  explicit SaddleFactorization(const SparseMatrix& K) { compute(K); }
  void compute(const SparseMatrix& K);
  Vector solve(const Vector& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  int size() const { return size_; }

  /// Relative residual bound checked on every solve.
  static constexpr double kResidualTolerance = 1e-8;
  static constexpr int kRefinementSteps = 2;

 private:
  void refine(const Eigen::MatrixXd& rhs, Eigen::MatrixXd& x) const;

  std::unique_ptr<Eigen::UmfPackLU<SparseMatrix>> lu_;
  std::unique_ptr<SparseMatrix> K_;
  int size_ = 0;
};

struct FineSolution {
  Vector u;
  Vector p;
};

/// Fine reference solve; the pressure is returned with zero mean.
FineSolution solve_reference(const FineSpace& space, const SparseMatrix& A, const SparseMatrix& B,
                             const Vector& load);
FineSolution solve_reference(const FineSpace& space, const CoefficientField& coeff,
                             const VectorFunction& f);

/// ‖div u‖ over the fine mesh.
double divergence_norm(const FineSpace& space, const Vector& u);

struct VelocityErrors {
  double h1 = 0.0;
  double l2 = 0.0;
};

/// (‖∇(u - w)‖, ‖u - w‖) for two fine velocity vectors.
VelocityErrors error_norms(const FineSpace& space, const Vector& u, const Vector& w);
double pressure_l2_norm(const FineSpace& space, const Vector& p);

}  // namespace msstokes
