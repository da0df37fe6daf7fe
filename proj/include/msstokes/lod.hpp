#pragma once

#include <iosfwd>
#include <memory>
#include <utility>
#include <vector>

#include "msstokes/common.hpp"
#include "msstokes/fem.hpp"
#include "msstokes/mesh.hpp"
#include "msstokes/polyspaces.hpp"
#include "msstokes/qoi.hpp"

namespace msstokes {

/// Immutable data shared by every corrector solve of one (hierarchy, ν, m).
class LodContext {
 public:
  LodContext(const MeshHierarchy& hierarchy, const FineSpace& space, const CoefficientField& coeff,
             int m);

  const MeshHierarchy& hierarchy() const { return *hierarchy_; }
  const SimplicialMesh& coarse() const { return hierarchy_->coarse(); }
  const FineSpace& space() const { return *space_; }
  const CoefficientField& coefficient() const { return *coeff_; }
  int m() const { return m_; }

  const SparseMatrix& A() const { return A_; }
  const SparseMatrix& B() const { return B_; }
  const QoiSystem& qoi() const { return qoi_; }
  const MultiplierSpace& multipliers() const { return qoi_.multipliers(); }
  const QuasiInterpolant& interpolant() const { return ih_; }
  const KappaTable& kappa() const { return kappa_; }
  /// Columns 2z + d: fine representation of Λ_z e_d.
  const SparseMatrix& prolongation() const { return P_; }
  /// Rows: coarse elements; entries ∫ λ_i of the fine pressure basis inside.
  const SparseMatrix& coarse_means() const { return E_; }

 private:
  const MeshHierarchy* hierarchy_;
  const FineSpace* space_;
  const CoefficientField* coeff_;
  int m_;
  SparseMatrix A_;
  SparseMatrix B_;
  QoiSystem qoi_;
  QuasiInterpolant ih_;
  KappaTable kappa_;
  SparseMatrix P_;
  SparseMatrix E_;
};

/// Factorized patch-local corrector system
///   [A  Bᵀ Cᵀ] [ψ]   [r1]
///   [B  0  0 ] [ξ] = [r2]
///   [C  0  0 ] [λ]   [g ]
/// on the velocity dofs supported in the patch, the fine pressures of the
/// patch with zero mean on each coarse element (pressure rows are tested
/// against the same space) and M_{H,T}^ℓ.
class PatchSystem {
 public:
  PatchSystem(const LodContext& ctx, const Patch& patch);

  const Patch& patch() const { return patch_; }
  const std::vector<int>& velocity_dofs() const { return vel_; }
  const std::vector<int>& pressure_dofs() const { return pres_; }
  const std::vector<int>& multiplier_indices() const { return mult_; }
  int size() const { return lu_.size(); }

  struct Result {
    SparseVector velocity;  // global fine velocity dofs
    SparseVector pressure;  // global fine pressure dofs
    Vector lambda;          // against multiplier_indices()
  };

  /// Global-length right-hand sides restricted to the patch.
  Result solve(const Vector& r1, const Vector& r2, const Vector& g) const;
  std::vector<Result> solve(const Eigen::MatrixXd& r1, const Eigen::MatrixXd& r2,
                            const Eigen::MatrixXd& g) const;

 private:
  Result unpack(const Vector& x) const;

  const LodContext* ctx_;
  Patch patch_;
  std::vector<int> vel_;
  std::vector<int> pres_;
  std::vector<int> mult_;
  // mean-free pressure basis per coarse element: tree parent (-1 at the
  // root), weight ratio to the parent, reduced index and tree children
  std::vector<int> parent_;
  std::vector<double> ratio_;
  std::vector<int> red_;
  std::vector<std::vector<int>> children_;
  int num_reduced_ = 0;
  SaddleFactorization lu_;
};

/// Patch covering the whole coarse mesh.
Patch full_patch(const SimplicialMesh& coarse, int seed);

struct Corrector {
  int seed = -1;
  int order = 0;
  SparseVector velocity;
  SparseVector pressure;
  std::vector<int> multipliers;
  Vector lambda;
};

/// Solves one corrector problem for the given global-length right-hand sides.
Corrector solve_corrector(const PatchSystem& system, const Vector& r1, const Vector& r2,
                          const Vector& g);

enum class BasisKind { Face, Element };

struct MultiscaleBasisFunction {
  BasisKind kind = BasisKind::Face;
  int entity = -1;  // coarse face or element
  int local = 0;    // 0-based j or k
  int ell = 0;
  int index = -1;   // multiplier index of the target QOI
  std::vector<std::pair<int, Point>> theta;  // nonzero θ_z
  SparseVector velocity;
  SparseVector pressure;
  int corrector_solves = 0;
};

struct BasisOptions {
  int threads = 1;
  /// With covers-domain patches, solve one aggregated global problem per
  /// basis function instead of one problem per contributing element.
  bool aggregate_global = true;
};

struct MultiscaleBasis {
  int m = 0;
  int ell = 0;
  bool covers_domain = false;
  std::vector<MultiscaleBasisFunction> functions;  // ordered by multiplier index
  long corrector_solves = 0;
  int factorizations = 0;

  int size() const { return static_cast<int>(functions.size()); }
  SparseMatrix velocity_matrix(int rows) const;
  SparseMatrix pressure_matrix(int rows) const;
};

/// Coarse elements whose correctors contribute to the face basis (F, j).
std::vector<int> face_basis_elements(const SimplicialMesh& coarse, int face, int j);

MultiscaleBasisFunction build_face_basis(const LodContext& ctx, int face, int j, int ell,
                                         const BasisOptions& options = {});
MultiscaleBasisFunction build_element_basis(const LodContext& ctx, int element, int k, int ell,
                                            const BasisOptions& options = {});
MultiscaleBasis build_basis(const LodContext& ctx, int ell, const BasisOptions& options = {});

struct MultiscaleSolution {
  Vector coefficients;  // against the basis functions
  Vector p_H;           // per coarse element, global mean zero
  Vector u;             // fine velocity
  Vector p_osc;         // fine pressure dofs
  std::vector<ScalarPoly> p_loc;  // per coarse element, mean zero
  double coarse_residual = 0.0;

  /// p_H + p_osc + p_loc at a point of fine triangle t.
  double pressure_pp(const MeshHierarchy& h, const FineSpace& space, int t,
                     const Eigen::Vector3d& bary) const;
};

struct CoarseSystem {
  Eigen::MatrixXd A;  // a(φ_j, φ_i)
  Eigen::MatrixXd B;  // b(φ_j, 1_K)
  Vector rhs;         // (f, φ_i)
};

CoarseSystem assemble_coarse(const LodContext& ctx, const MultiscaleBasis& basis, const Vector& load);
MultiscaleSolution assemble_and_solve_coarse(const LodContext& ctx, const MultiscaleBasis& basis,
                                             const VectorFunction& f);
MultiscaleSolution assemble_and_solve_coarse(const LodContext& ctx, const MultiscaleBasis& basis,
                                             const Vector& load);
/// Adds p_loc from the element-wise projection Π_H^m f.
void postprocess_pressure(const LodContext& ctx, MultiscaleSolution& sol, const VectorFunction& f);

/// ‖p_h - p^pp‖ over the fine mesh.
double pressure_pp_error(const LodContext& ctx, const MultiscaleSolution& sol, const Vector& p_h);
/// ‖Π_H p_h - p_H‖.
double coarse_pressure_error(const LodContext& ctx, const MultiscaleSolution& sol, const Vector& p_h);

/// Text dump: one header line per basis function
///   basis <face|element> <entity> <local> <ell> <nvel> <nnz_u> <npres> <nnz_p>
/// followed by nnz_u lines "<dof> <value>" of the velocity and nnz_p lines of
/// the pressure companion.
void write_basis(std::ostream& os, const MultiscaleBasis& basis, int nvel, int npres);

}  // namespace msstokes
