#include "msstokes/lod.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

#include <Eigen/LU>

#include "msstokes/quadrature.hpp"

namespace msstokes {

namespace {

SparseVector sparse_from_dense(const Vector& x) {
  SparseVector v(x.size());
  int nnz = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) nnz += x[i] != 0.0;
  v.reserve(nnz);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) v.insertBack(i) = x[i];
  }
  return v;
}

SparseMatrix columns_of(const std::vector<MultiscaleBasisFunction>& functions, int rows,
                        SparseVector MultiscaleBasisFunction::*member) {
  SparseMatrix M(rows, static_cast<int>(functions.size()));
  Eigen::VectorXi nnz(functions.size());
  for (std::size_t i = 0; i < functions.size(); ++i) {
    nnz[i] = static_cast<int>((functions[i].*member).nonZeros());
  }
  M.reserve(nnz);
  for (std::size_t i = 0; i < functions.size(); ++i) {
    const SparseVector& v = functions[i].*member;
    if (v.size() != rows) throw ValidationError("basis function has the wrong fine dimension");
    for (SparseVector::InnerIterator it(v); it; ++it) {
      M.insert(it.index(), static_cast<int>(i)) = it.value();
    }
  }
  M.makeCompressed();
  return M;
}

// A_T, B_T and c_T applied to the six coarse hat fields Λ_z e_d of one element.
struct ElementColumns {
  std::array<int, 3> vertices;
  std::array<bool, 3> interior;
  std::array<Vector, 6> a;
  std::array<Vector, 6> b;
  std::array<Vector, 6> c;
};

ElementColumns element_columns(const LodContext& ctx, int T) {
  ElementColumns cols;
  const SimplicialMesh& coarse = ctx.coarse();
  const auto& fine_tris = ctx.hierarchy().fine_elements(T);
  const SparseMatrix cT = ctx.qoi().assemble_cT(T, ctx.kappa());
  for (int i = 0; i < 3; ++i) {
    const int z = coarse.triangle(T)[i];
    cols.vertices[i] = z;
    cols.interior[i] = !coarse.boundary_vertex(z);
    for (int d = 0; d < 2; ++d) {
      const int s = 2 * i + d;
      if (!cols.interior[i]) continue;
      const Vector lam = ctx.prolongation().col(2 * z + d);
      cols.a[s] = apply_a_on(ctx.space(), ctx.coefficient(), fine_tris, lam);
      cols.b[s] = apply_b_on(ctx.space(), fine_tris, lam);
      cols.c[s] = cT * lam;
    }
  }
  return cols;
}

std::vector<Point> theta_of(const LodContext& ctx, const MultiscaleBasisFunction& fn) {
  std::vector<Point> theta(ctx.coarse().num_vertices(), Point::Zero());
  for (const auto& [z, value] : fn.theta) theta[z] = value;
  return theta;
}

MultiscaleBasisFunction init_function(const LodContext& ctx, int index, int ell) {
  const MultiplierSpace& M = ctx.multipliers();
  const auto entry = M.decode(index);
  MultiscaleBasisFunction fn;
  fn.kind = entry.face ? BasisKind::Face : BasisKind::Element;
  fn.entity = entry.entity;
  fn.local = entry.local;
  fn.ell = ell;
  fn.index = index;
  if (entry.face) {
    const auto theta = coarse_nodal_lift(ctx.interpolant(), entry.entity, entry.local);
    for (std::size_t z = 0; z < theta.size(); ++z) {
      if (theta[z] != Point::Zero()) fn.theta.emplace_back(static_cast<int>(z), theta[z]);
    }
  }
  const Vector lift = ctx.prolongation() * nodal_vector(theta_of(ctx, fn));
  fn.velocity = sparse_from_dense(lift);
  fn.pressure = SparseVector(ctx.space().num_pressure_dofs());
  return fn;
}

std::vector<int> contributing_elements(const LodContext& ctx, const MultiscaleBasisFunction& fn) {
  if (fn.kind == BasisKind::Element) return {fn.entity};
  return face_basis_elements(ctx.coarse(), fn.entity, fn.local);
}

// Unit QOI target of a basis function: the multiplier block of c(φ, ·).
void add_target(const LodContext& ctx, const MultiscaleBasisFunction& fn, double weight, Vector& g) {
  const MultiplierSpace& M = ctx.multipliers();
  if (fn.kind == BasisKind::Face) {
    g[fn.index] += weight * M.H() * M.face_basis(fn.entity).gram(fn.local);
  } else {
    const Eigen::MatrixXd& G = M.element_gram(fn.entity);
    for (int k = 0; k < M.K(); ++k) g[M.element_index(fn.entity, k)] += weight * G(fn.local, k);
  }
}

struct Contribution {
  int function;
  PatchSystem::Result result;
};

std::vector<Contribution> solve_element(const LodContext& ctx, int T, int ell,
                                        const std::vector<int>& tasks,
                                        const std::vector<MultiscaleBasisFunction>& functions,
                                        const PatchSystem* global) {
  if (tasks.empty()) return {};
  const Patch patch = make_patch(ctx.coarse(), T, ell);
  std::unique_ptr<PatchSystem> local;
  const PatchSystem* system = global;
  if (!patch.covers_domain || !global) {
    local = std::make_unique<PatchSystem>(ctx, patch);
    system = local.get();
  }
  const ElementColumns cols = element_columns(ctx, T);
  const int nv = ctx.space().num_velocity_dofs();
  const int np = ctx.space().num_pressure_dofs();
  const int nm = ctx.multipliers().size();
  const int n = static_cast<int>(tasks.size());
  Eigen::MatrixXd r1 = Eigen::MatrixXd::Zero(nv, n);
  Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(np, n);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nm, n);
  for (int col = 0; col < n; ++col) {
    const MultiscaleBasisFunction& fn = functions[tasks[col]];
    const auto theta = theta_of(ctx, fn);
    for (int i = 0; i < 3; ++i) {
      if (!cols.interior[i]) continue;
      for (int d = 0; d < 2; ++d) {
        const double th = theta[cols.vertices[i]][d];
        if (th == 0.0) continue;
        r1.col(col) -= th * cols.a[2 * i + d];
        r2.col(col) -= th * cols.b[2 * i + d];
        g.col(col) -= th * cols.c[2 * i + d];
      }
    }
    Vector target = Vector::Zero(nm);
    if (fn.kind == BasisKind::Face) {
      add_target(ctx, fn, ctx.kappa().weight(ctx.coarse(), fn.entity, T), target);
    } else {
      add_target(ctx, fn, 1.0, target);
    }
    g.col(col) += target;
  }
  auto results = system->solve(r1, r2, g);
  std::vector<Contribution> out;
  for (int col = 0; col < n; ++col) out.push_back({tasks[col], std::move(results[col])});
  return out;
}

void accumulate(MultiscaleBasisFunction& fn, const PatchSystem::Result& r) {
  fn.velocity = fn.velocity + r.velocity;
  fn.pressure = fn.pressure + r.pressure;
}

// One global solve per basis function: the element correctors share the same
// system, so their sum solves the summed right-hand side.
void solve_aggregated(const LodContext& ctx, const PatchSystem& global,
                      std::vector<MultiscaleBasisFunction*> fns) {
  const int nm = ctx.multipliers().size();
  const int block = 32;
  for (std::size_t start = 0; start < fns.size(); start += block) {
    const int n = static_cast<int>(std::min<std::size_t>(block, fns.size() - start));
    Eigen::MatrixXd r1(ctx.space().num_velocity_dofs(), n);
    Eigen::MatrixXd r2(ctx.space().num_pressure_dofs(), n);
    Eigen::MatrixXd g(nm, n);
    for (int col = 0; col < n; ++col) {
      MultiscaleBasisFunction& fn = *fns[start + col];
      const Vector lift = ctx.prolongation() * nodal_vector(theta_of(ctx, fn));
      r1.col(col) = -(ctx.A() * lift);
      r2.col(col) = -(ctx.B() * lift);
      Vector target = -(ctx.qoi().c() * lift);
      add_target(ctx, fn, 1.0, target);
      g.col(col) = target;
    }
    const auto results = global.solve(r1, r2, g);
    for (int col = 0; col < n; ++col) {
      accumulate(*fns[start + col], results[col]);
      fns[start + col]->corrector_solves = 1;
    }
  }
}

bool all_cover(const SimplicialMesh& coarse, const std::vector<int>& elements, int ell) {
  for (int T : elements) {
    if (!make_patch(coarse, T, ell).covers_domain) return false;
  }
  return true;
}

std::vector<MultiscaleBasisFunction> build_functions(const LodContext& ctx,
                                                     const std::vector<int>& indices, int ell,
                                                     const BasisOptions& options,
                                                     int& factorizations) {
  const SimplicialMesh& coarse = ctx.coarse();
  std::vector<MultiscaleBasisFunction> functions;
  std::vector<std::vector<int>> tasks(coarse.num_triangles());
  std::vector<int> involved;
  for (int index : indices) {
    functions.push_back(init_function(ctx, index, ell));
    const int f = static_cast<int>(functions.size()) - 1;
    for (int T : contributing_elements(ctx, functions.back())) {
      tasks[T].push_back(f);
      involved.push_back(T);
    }
    functions.back().corrector_solves = static_cast<int>(contributing_elements(ctx, functions.back()).size());
  }
  std::sort(involved.begin(), involved.end());
  involved.erase(std::unique(involved.begin(), involved.end()), involved.end());
  factorizations = 0;
  if (involved.empty()) return functions;

  bool any_cover = false;
  for (int T : involved) any_cover = any_cover || make_patch(coarse, T, ell).covers_domain;
  std::unique_ptr<PatchSystem> global;
  if (any_cover) {
    global = std::make_unique<PatchSystem>(ctx, full_patch(coarse, involved.front()));
    ++factorizations;
  }
  if (global && options.aggregate_global && all_cover(coarse, involved, ell)) {
    std::vector<MultiscaleBasisFunction*> ptrs;
    for (auto& fn : functions) ptrs.push_back(&fn);
    solve_aggregated(ctx, *global, ptrs);
    return functions;
  }

  const int threads = std::max(1, options.threads);
  for (std::size_t start = 0; start < involved.size(); start += threads) {
    const std::size_t count = std::min<std::size_t>(threads, involved.size() - start);
    std::vector<std::vector<Contribution>> results(count);
    std::vector<std::exception_ptr> errors(count);
    auto work = [&](std::size_t i) {
      try {
        const int T = involved[start + i];
        results[i] = solve_element(ctx, T, ell, tasks[T], functions, global.get());
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    if (count == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t i = 0; i < count; ++i) pool.emplace_back(work, i);
      for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < count; ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);
      const int T = involved[start + i];
      if (!global || !make_patch(coarse, T, ell).covers_domain) ++factorizations;
      for (const Contribution& c : results[i]) accumulate(functions[c.function], c.result);
    }
  }
  return functions;
}

}  // namespace

LodContext::LodContext(const MeshHierarchy& hierarchy, const FineSpace& space,
                       const CoefficientField& coeff, int m)
    : hierarchy_(&hierarchy),
      space_(&space),
      coeff_(&coeff),
      m_(m),
      A_(assemble_a(space, coeff)),
      B_(assemble_b(space)),
      qoi_(hierarchy, space, m),
      ih_(hierarchy.coarse()),
      kappa_(KappaTable::uniform(hierarchy.coarse())),
      P_(coarse_p1_prolongation(hierarchy, space)) {
  if (&hierarchy.fine() != &space.mesh()) {
    throw ValidationError("fine space is not built on the hierarchy's fine mesh");
  }
  std::vector<Triplet> triplets;
  for (int t = 0; t < space.mesh().num_triangles(); ++t) {
    const double w = space.mesh().area(t) / 3.0;
    for (int i = 0; i < 3; ++i) triplets.emplace_back(hierarchy.coarse_parent(t), 3 * t + i, w);
  }
  E_.resize(hierarchy.coarse().num_triangles(), space.num_pressure_dofs());
  E_.setFromTriplets(triplets.begin(), triplets.end());
}

Patch full_patch(const SimplicialMesh& coarse, int seed) {
  Patch patch;
  patch.seed = seed;
  patch.order = 0;
  patch.elements.resize(coarse.num_triangles());
  for (int t = 0; t < coarse.num_triangles(); ++t) patch.elements[t] = t;
  patch.interior_faces = coarse.interior_faces();
  patch.covers_domain = true;
  return patch;
}

PatchSystem::PatchSystem(const LodContext& ctx, const Patch& patch) : ctx_(&ctx), patch_(patch) {
  const MeshHierarchy& h = ctx.hierarchy();
  const FineSpace& space = ctx.space();
  const SimplicialMesh& fine = space.mesh();
  std::vector<char> in_patch(ctx.coarse().num_triangles(), 0);
  for (int T : patch.elements) in_patch[T] = 1;

  std::vector<char> touched_in(space.num_nodes(), 0);
  std::vector<char> touched_out(space.num_nodes(), 0);
  for (int t = 0; t < fine.num_triangles(); ++t) {
    auto& touched = in_patch[h.coarse_parent(t)] ? touched_in : touched_out;
    for (int node : space.element_nodes(t)) touched[node] = 1;
  }
  for (int node = 0; node < space.num_nodes(); ++node) {
    if (!touched_in[node] || touched_out[node] || space.velocity_dof(node, 0) < 0) continue;
    vel_.push_back(space.velocity_dof(node, 0));
    vel_.push_back(space.velocity_dof(node, 1));
  }
  std::sort(vel_.begin(), vel_.end());
  std::vector<int> fine_tris;
  for (int T : patch.elements) {
    const auto& ts = h.fine_elements(T);
    fine_tris.insert(fine_tris.end(), ts.begin(), ts.end());
  }
  std::sort(fine_tris.begin(), fine_tris.end());
  for (int t : fine_tris) {
    for (int i = 0; i < 3; ++i) pres_.push_back(3 * t + i);
  }
  mult_ = ctx.multipliers().patch_indices(patch);

  const int nV = static_cast<int>(vel_.size());
  const int nP = static_cast<int>(pres_.size());
  const int nM = static_cast<int>(mult_.size());
  std::vector<int> vmap(space.num_velocity_dofs(), -1);
  std::vector<int> pmap(space.num_pressure_dofs(), -1);
  std::vector<int> mmap(ctx.multipliers().size(), -1);
  for (int i = 0; i < nV; ++i) vmap[vel_[i]] = i;
  for (int i = 0; i < nP; ++i) pmap[pres_[i]] = i;
  for (int i = 0; i < nM; ++i) mmap[mult_[i]] = i;

  // Pressures with zero mean on every coarse element, spanned by
  // q_u - (w_u / w_parent) q_parent over a tree of the element's dofs. The
  // parent of local position u clears its lowest nonzero mixed-radix digit
  // (radix 3, 3, then 4), which follows the refinement hierarchy.
  parent_.assign(nP, -1);
  ratio_.assign(nP, 0.0);
  children_.assign(nP, std::vector<int>());
  for (int T : patch.elements) {
    const auto& ts = h.fine_elements(T);
    std::vector<int> local;
    local.reserve(3 * ts.size());
    for (int t : ts) {
      for (int i = 0; i < 3; ++i) local.push_back(pmap[3 * t + i]);
    }
    std::sort(local.begin(), local.end());
    for (std::size_t u = 1; u < local.size(); ++u) {
      std::size_t place = 1;
      std::size_t radix = 3;
      int digit_index = 0;
      while ((u / place) % radix == 0) {
        place *= radix;
        radix = ++digit_index < 2 ? 3 : 4;
      }
      const std::size_t up = u - ((u / place) % radix) * place;
      const int r = local[u];
      const int q = local[up];
      parent_[r] = q;
      ratio_[r] = fine.area(pres_[r] / 3) / fine.area(pres_[q] / 3);
      children_[q].push_back(r);
    }
  }
  red_.assign(nP, -1);
  int nR = 0;
  for (int r = 0; r < nP; ++r) {
    if (parent_[r] >= 0) red_[r] = nR++;
  }
  num_reduced_ = nR;

  std::vector<Triplet> triplets;
  const SparseMatrix& A = ctx.A();
  const SparseMatrix& B = ctx.B();
  const SparseMatrix& C = ctx.qoi().c();
  auto add_b = [&](int row, int col, double v) {
    triplets.emplace_back(nV + row, col, v);
    triplets.emplace_back(col, nV + row, v);
  };
  for (int j = 0; j < nV; ++j) {
    const int g = vel_[j];
    for (SparseMatrix::InnerIterator it(A, g); it; ++it) {
      const int i = vmap[it.row()];
      if (i >= 0) triplets.emplace_back(i, j, it.value());
    }
    for (SparseMatrix::InnerIterator it(B, g); it; ++it) {
      const int r = pmap[it.row()];
      if (r < 0) continue;
      if (red_[r] >= 0) add_b(red_[r], j, it.value());
      for (int q : children_[r]) add_b(red_[q], j, -ratio_[q] * it.value());
    }
    for (SparseMatrix::InnerIterator it(C, g); it; ++it) {
      const int r = mmap[it.row()];
      if (r < 0) continue;
      triplets.emplace_back(nV + nR + r, j, it.value());
      triplets.emplace_back(j, nV + nR + r, it.value());
    }
  }
  const int n = nV + nR + nM;
  SparseMatrix K(n, n);
  K.setFromTriplets(triplets.begin(), triplets.end());
  try {
    lu_.compute(K);
  } catch (const SolverError& e) {
    throw SolverError("corrector system for element " + std::to_string(patch.seed) + " (order " +
                      std::to_string(patch.order) + ", " + std::to_string(nV) + " velocity, " +
                      std::to_string(nP) + " pressure, " + std::to_string(nM) +
                      " multiplier unknowns): " + e.what());
  }
}

PatchSystem::Result PatchSystem::unpack(const Vector& x) const {
  const int nV = static_cast<int>(vel_.size());
  const int nP = static_cast<int>(pres_.size());
  const int nM = static_cast<int>(mult_.size());
  Result r;
  r.velocity = SparseVector(ctx_->space().num_velocity_dofs());
  r.velocity.reserve(nV);
  for (int i = 0; i < nV; ++i) {
    if (x[i] != 0.0) r.velocity.insertBack(vel_[i]) = x[i];
  }
  const int nR = num_reduced_;
  Vector xi = Vector::Zero(nP);
  for (int i = 0; i < nP; ++i) {
    if (red_[i] < 0) continue;
    xi[i] += x[nV + red_[i]];
    xi[parent_[i]] -= ratio_[i] * x[nV + red_[i]];
  }
  r.pressure = SparseVector(ctx_->space().num_pressure_dofs());
  r.pressure.reserve(nP);
  for (int i = 0; i < nP; ++i) {
    if (xi[i] != 0.0) r.pressure.insertBack(pres_[i]) = xi[i];
  }
  r.lambda = x.segment(nV + nR, nM);
  return r;
}

PatchSystem::Result PatchSystem::solve(const Vector& r1, const Vector& r2, const Vector& g) const {
  Eigen::MatrixXd m1 = r1;
  Eigen::MatrixXd m2 = r2;
  Eigen::MatrixXd m3 = g;
  return std::move(solve(m1, m2, m3).front());
}

std::vector<PatchSystem::Result> PatchSystem::solve(const Eigen::MatrixXd& r1, const Eigen::MatrixXd& r2,
                                                    const Eigen::MatrixXd& g) const {
  const int nV = static_cast<int>(vel_.size());
  const int nP = static_cast<int>(pres_.size());
  const int nM = static_cast<int>(mult_.size());
  const int cols = static_cast<int>(r1.cols());
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(size(), cols);
  for (int i = 0; i < nV; ++i) rhs.row(i) = r1.row(vel_[i]);
  for (int i = 0; i < nP; ++i) {
    if (red_[i] >= 0) rhs.row(nV + red_[i]) = r2.row(pres_[i]) - ratio_[i] * r2.row(pres_[parent_[i]]);
  }
  for (int i = 0; i < nM; ++i) rhs.row(nV + num_reduced_ + i) = g.row(mult_[i]);
  std::vector<Result> out;
  out.reserve(cols);
  std::vector<int> nonzero;
  for (int c = 0; c < cols; ++c) {
    if (rhs.col(c).lpNorm<Eigen::Infinity>() > 0.0) nonzero.push_back(c);
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(size(), cols);
  if (!nonzero.empty()) {
    Eigen::MatrixXd sub(size(), nonzero.size());
    for (std::size_t k = 0; k < nonzero.size(); ++k) sub.col(k) = rhs.col(nonzero[k]);
    const Eigen::MatrixXd sol = lu_.solve(sub);
    for (std::size_t k = 0; k < nonzero.size(); ++k) x.col(nonzero[k]) = sol.col(k);
  }
  for (int c = 0; c < cols; ++c) out.push_back(unpack(x.col(c)));
  return out;
}

Corrector solve_corrector(const PatchSystem& system, const Vector& r1, const Vector& r2,
                          const Vector& g) {
  auto r = system.solve(r1, r2, g);
  Corrector c;
  c.seed = system.patch().seed;
  c.order = system.patch().order;
  c.velocity = std::move(r.velocity);
  c.pressure = std::move(r.pressure);
  c.multipliers = system.multiplier_indices();
  c.lambda = std::move(r.lambda);
  return c;
}

SparseMatrix MultiscaleBasis::velocity_matrix(int rows) const {
  return columns_of(functions, rows, &MultiscaleBasisFunction::velocity);
}

SparseMatrix MultiscaleBasis::pressure_matrix(int rows) const {
  return columns_of(functions, rows, &MultiscaleBasisFunction::pressure);
}

std::vector<int> face_basis_elements(const SimplicialMesh& coarse, int face, int j) {
  const Face& f = coarse.face(face);
  if (f.boundary()) throw ValidationError("boundary faces carry no basis functions");
  if (j > 0) return {f.elements[0], f.elements[1]};
  std::vector<int> out;
  for (int v : f.vertices) {
    const auto& ts = coarse.vertex_elements(v);
    out.insert(out.end(), ts.begin(), ts.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

MultiscaleBasisFunction build_face_basis(const LodContext& ctx, int face, int j, int ell,
                                         const BasisOptions& options) {
  const int index = ctx.multipliers().face_index(face, j);
  int factorizations = 0;
  return std::move(build_functions(ctx, {index}, ell, options, factorizations).front());
}

MultiscaleBasisFunction build_element_basis(const LodContext& ctx, int element, int k, int ell,
                                            const BasisOptions& options) {
  if (ctx.multipliers().K() == 0) throw ValidationError("no element basis functions exist for m = 0");
  const int index = ctx.multipliers().element_index(element, k);
  int factorizations = 0;
  return std::move(build_functions(ctx, {index}, ell, options, factorizations).front());
}

MultiscaleBasis build_basis(const LodContext& ctx, int ell, const BasisOptions& options) {
  if (ell < 1) throw ValidationError("localization order must be at least 1");
  MultiscaleBasis basis;
  basis.m = ctx.m();
  basis.ell = ell;
  basis.covers_domain = all_cover(ctx.coarse(), [&] {
    std::vector<int> all(ctx.coarse().num_triangles());
    for (int t = 0; t < ctx.coarse().num_triangles(); ++t) all[t] = t;
    return all;
  }(), ell);
  std::vector<int> indices(ctx.multipliers().size());
  for (int i = 0; i < ctx.multipliers().size(); ++i) indices[i] = i;
  basis.functions = build_functions(ctx, indices, ell, options, basis.factorizations);
  for (const auto& fn : basis.functions) basis.corrector_solves += fn.corrector_solves;
  return basis;
}

double MultiscaleSolution::pressure_pp(const MeshHierarchy& h, const FineSpace& space, int t,
                                       const Eigen::Vector3d& bary) const {
  const int K = h.coarse_parent(t);
  double value = p_H[K] + space.evaluate_pressure(p_osc, t, bary);
  if (!p_loc.empty()) {
    const auto v = triangle_vertices(space.mesh(), t);
    value += p_loc[K](bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2]);
  }
  return value;
}

CoarseSystem assemble_coarse(const LodContext& ctx, const MultiscaleBasis& basis, const Vector& load) {
  const int nv = ctx.space().num_velocity_dofs();
  const int np = ctx.space().num_pressure_dofs();
  const int N = basis.size();
  const SparseMatrix Phi = basis.velocity_matrix(nv);
  const SparseMatrix APhi = ctx.A() * Phi;
  CoarseSystem sys;
  sys.A.resize(N, N);
  const int block = 64;
  for (int c0 = 0; c0 < N; c0 += block) {
    const int w = std::min(block, N - c0);
    const Eigen::MatrixXd D = APhi.middleCols(c0, w);
    sys.A.middleCols(c0, w) = Phi.transpose() * D;
  }
  std::vector<Triplet> triplets;
  for (int t = 0; t < ctx.space().mesh().num_triangles(); ++t) {
    for (int i = 0; i < 3; ++i) triplets.emplace_back(ctx.hierarchy().coarse_parent(t), 3 * t + i, 1.0);
  }
  SparseMatrix indicator(ctx.coarse().num_triangles(), np);
  indicator.setFromTriplets(triplets.begin(), triplets.end());
  const SparseMatrix BPhi = ctx.B() * Phi;
  sys.B = Eigen::MatrixXd(indicator * BPhi);
  sys.rhs = Phi.transpose() * load;
  return sys;
}

MultiscaleSolution assemble_and_solve_coarse(const LodContext& ctx, const MultiscaleBasis& basis,
                                             const Vector& load) {
  const SimplicialMesh& coarse = ctx.coarse();
  const int N = basis.size();
  const int nK = coarse.num_triangles();
  const CoarseSystem sys = assemble_coarse(ctx, basis, load);
  const int n = N + nK + 1;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  S.topLeftCorner(N, N) = 0.5 * (sys.A + sys.A.transpose());
  S.block(N, 0, nK, N) = sys.B;
  S.block(0, N, N, nK) = sys.B.transpose();
  for (int K = 0; K < nK; ++K) {
    S(N + K, N + nK) = coarse.area(K);
    S(N + nK, N + K) = coarse.area(K);
  }
  Vector rhs = Vector::Zero(n);
  rhs.head(N) = sys.rhs;
  MultiscaleSolution sol;
  Vector x = Vector::Zero(n);
  if (rhs.norm() > 0.0) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(S);
    x = lu.solve(rhs);
    sol.coarse_residual = (S * x - rhs).norm() / rhs.norm();
    if (!x.allFinite() || sol.coarse_residual > 1e-6) {
      throw SolverError("coarse saddle-point system is singular (relative residual " +
                        std::to_string(sol.coarse_residual) + "); increase ell or refine the fine mesh");
    }
  }
  sol.coefficients = x.head(N);
  sol.p_H = x.segment(N, nK);
  sol.u = basis.velocity_matrix(ctx.space().num_velocity_dofs()) * sol.coefficients;
  sol.p_osc = basis.pressure_matrix(ctx.space().num_pressure_dofs()) * sol.coefficients;
  return sol;
}

MultiscaleSolution assemble_and_solve_coarse(const LodContext& ctx, const MultiscaleBasis& basis,
                                             const VectorFunction& f) {
  return assemble_and_solve_coarse(ctx, basis, assemble_load(ctx.space(), f));
}

void postprocess_pressure(const LodContext& ctx, MultiscaleSolution& sol, const VectorFunction& f) {
  const SimplicialMesh& coarse = ctx.coarse();
  const int m = ctx.m();
  const PiecewisePolyField proj = project_PiHm(coarse, f, m, m + 8);
  sol.p_loc.clear();
  for (int T = 0; T < coarse.num_triangles(); ++T) {
    sol.p_loc.push_back(local_pressure_lift(proj.values[T], ctx.multipliers().element_basis(T),
                                            triangle_vertices(coarse, T))
                            .p_loc);
  }
}

double pressure_pp_error(const LodContext& ctx, const MultiscaleSolution& sol, const Vector& p_h) {
  const FineSpace& space = ctx.space();
  const SimplicialMesh& fine = space.mesh();
  const auto& rule = triangle_rule(std::max(2, 2 * (ctx.m() + 1)));
  double sum = 0.0;
  for (int t = 0; t < fine.num_triangles(); ++t) {
    const double area = fine.area(t);
    for (const auto& q : rule) {
      const Eigen::Vector3d lam(1.0 - q.xi - q.eta, q.xi, q.eta);
      const double e = space.evaluate_pressure(p_h, t, lam) - sol.pressure_pp(ctx.hierarchy(), space, t, lam);
      sum += 2.0 * area * q.weight * e * e;
    }
  }
  return std::sqrt(sum);
}

double coarse_pressure_error(const LodContext& ctx, const MultiscaleSolution& sol, const Vector& p_h) {
  const Vector integrals = ctx.coarse_means() * p_h;
  double sum = 0.0;
  for (int K = 0; K < ctx.coarse().num_triangles(); ++K) {
    const double area = ctx.coarse().area(K);
    const double e = integrals[K] / area - sol.p_H[K];
    sum += area * e * e;
  }
  return std::sqrt(sum);
}

void write_basis(std::ostream& os, const MultiscaleBasis& basis, int nvel, int npres) {
  os.precision(17);
  for (const auto& fn : basis.functions) {
    os << "basis " << (fn.kind == BasisKind::Face ? "face" : "element") << ' ' << fn.entity << ' '
       << fn.local << ' ' << fn.ell << ' ' << nvel << ' ' << fn.velocity.nonZeros() << ' ' << npres
       << ' ' << fn.pressure.nonZeros() << '\n';
    for (SparseVector::InnerIterator it(fn.velocity); it; ++it) os << it.index() << ' ' << it.value() << '\n';
    for (SparseVector::InnerIterator it(fn.pressure); it; ++it) os << it.index() << ' ' << it.value() << '\n';
  }
}

}  // namespace msstokes
