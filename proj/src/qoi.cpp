#include "msstokes/qoi.hpp"

#include <algorithm>
#include <cmath>

#include "msstokes/fem.hpp"
#include "msstokes/mesh.hpp"
#include "msstokes/quadrature.hpp"

namespace msstokes {

namespace {

double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

bool on_segment(const Point& a, const Point& b, const Point& p) {
  const Point d = b - a;
  const double len = d.norm();
  if (std::abs(cross(d, p - a)) > 1e-12 * len) return false;
  const double t = d.dot(p - a) / (len * len);
  return t >= -1e-12 && t <= 1.0 + 1e-12;
}

}  // namespace

Eigen::Vector3d barycentric_coordinates(const Vertices3& v, const Point& x) {
  const double det = cross(v[1] - v[0], v[2] - v[0]);
  const double l1 = cross(x - v[0], v[2] - v[0]) / det;
  const double l2 = cross(v[1] - v[0], x - v[0]) / det;
  return {1.0 - l1 - l2, l1, l2};
}

MultiplierSpace::MultiplierSpace(const MeshHierarchy& hierarchy, int m)
    : coarse_(&hierarchy.coarse()), m_(m), H_(hierarchy.H()) {
  if (m < 0) throw ValidationError("method order m must be nonnegative");
  const SimplicialMesh& coarse = *coarse_;
  num_interior_faces_ = static_cast<int>(coarse.interior_faces().size());
  num_elements_ = coarse.num_triangles();
  for (int f = 0; f < coarse.num_faces(); ++f) face_bases_.push_back(build_face_basis(coarse, f, m));
  for (int t = 0; t < num_elements_; ++t) {
    const auto v = triangle_vertices(coarse, t);
    element_bases_.push_back(build_element_basis(t, v, m));
    const ElementPolyBasis& basis = element_bases_.back();
    Eigen::MatrixXd G(K(), K());
    for (int a = 0; a < K(); ++a) {
      const VectorPoly pa = basis.complement_function(a);
      for (int b = 0; b <= a; ++b) {
        const VectorPoly pb = basis.complement_function(b);
        G(a, b) = G(b, a) = integrate_triangle(v, 2 * m, [&](const Point& x) { return pa(x).dot(pb(x)); });
      }
    }
    element_grams_.push_back(std::move(G));
  }
}

int MultiplierSpace::face_index(int face, int j) const {
  const int ordinal = coarse_->interior_face_ordinal(face);
  if (ordinal < 0) throw ValidationError("boundary faces carry no QOIs");
  if (j < 0 || j >= J()) throw ValidationError("face polynomial index out of range");
  return ordinal * J() + j;
}

int MultiplierSpace::element_index(int element, int k) const {
  if (k < 0 || k >= K()) throw ValidationError("element QOI index out of range");
  return num_face_multipliers() + element * K() + k;
}

MultiplierSpace::Entry MultiplierSpace::decode(int index) const {
  if (index < num_face_multipliers()) {
    return {true, coarse_->interior_faces()[index / J()], index % J()};
  }
  const int e = index - num_face_multipliers();
  return {false, e / K(), e % K()};
}

std::vector<int> MultiplierSpace::patch_indices(const Patch& patch) const {
  std::vector<int> out;
  for (int f : patch.interior_faces) {
    for (int j = 0; j < J(); ++j) out.push_back(face_index(f, j));
  }
  for (int t : patch.elements) {
    for (int k = 0; k < K(); ++k) out.push_back(element_index(t, k));
  }
  std::sort(out.begin(), out.end());
  return out;
}

SparseMatrix MultiplierSpace::target_gram() const {
  std::vector<Triplet> triplets;
  for (int i = 0; i < num_face_multipliers(); ++i) {
    const Entry e = decode(i);
    triplets.emplace_back(i, i, H_ * face_bases_[e.entity].gram(e.local));
  }
  for (int t = 0; t < num_elements_; ++t) {
    for (int a = 0; a < K(); ++a) {
      for (int b = 0; b < K(); ++b) {
        triplets.emplace_back(element_index(t, a), element_index(t, b), element_grams_[t](a, b));
      }
    }
  }
  SparseMatrix G(size(), size());
  G.setFromTriplets(triplets.begin(), triplets.end());
  return G;
}

double MultiplierSpace::norm(const Vector& mu) const {
  if (mu.size() != size()) throw ValidationError("multiplier vector has the wrong size");
  double sum = 0.0;
  for (int i = 0; i < num_face_multipliers(); ++i) {
    const Entry e = decode(i);
    sum += H_ * mu[i] * mu[i] * face_bases_[e.entity].gram(e.local);
  }
  for (int t = 0; t < num_elements_ && K() > 0; ++t) {
    const Vector block = mu.segment(element_index(t, 0), K());
    sum += block.dot(element_grams_[t] * block);
  }
  return std::sqrt(sum);
}

KappaTable KappaTable::uniform(const SimplicialMesh& coarse) {
  KappaTable kappa;
  kappa.weights.assign(coarse.num_faces(), {0.5, 0.5});
  for (int f = 0; f < coarse.num_faces(); ++f) {
    if (coarse.face(f).boundary()) kappa.weights[f] = {0.0, 0.0};
  }
  return kappa;
}

void KappaTable::validate(const SimplicialMesh& coarse) const {
  if (static_cast<int>(weights.size()) != coarse.num_faces()) {
    throw ValidationError("kappa table does not match the coarse faces");
  }
  for (int f : coarse.interior_faces()) {
    const auto& w = weights[f];
    if (w[0] < 0.0 || w[1] < 0.0 || std::abs(w[0] + w[1] - 1.0) > 1e-12) {
      throw ValidationError("kappa weights on face " + std::to_string(f) +
                            " must be nonnegative and sum to one");
    }
  }
}

double KappaTable::weight(const SimplicialMesh& coarse, int face, int element) const {
  const Face& f = coarse.face(face);
  if (f.elements[0] == element) return weights[face][0];
  if (f.elements[1] == element) return weights[face][1];
  return 0.0;
}

QoiSystem::QoiSystem(const MeshHierarchy& hierarchy, const FineSpace& space, int m)
    : hierarchy_(&hierarchy), space_(&space), multipliers_(hierarchy, m) {
  const SimplicialMesh& coarse = hierarchy.coarse();
  const SimplicialMesh& fine = space.mesh();
  segments_.assign(coarse.num_faces(), {});
  std::vector<char> seen(fine.num_faces(), 0);
  for (int T = 0; T < coarse.num_triangles(); ++T) {
    const auto& cfaces = coarse.element_faces(T);
    for (int t : hierarchy.fine_elements(T)) {
      for (int ff : fine.element_faces(t)) {
        if (seen[ff]) continue;
        const Face& edge = fine.face(ff);
        const Point& p = fine.vertex(edge.vertices[0]);
        const Point& q = fine.vertex(edge.vertices[1]);
        for (int cf : cfaces) {
          const Face& cface = coarse.face(cf);
          const Point& a = coarse.vertex(cface.vertices[0]);
          const Point& b = coarse.vertex(cface.vertices[1]);
          if (on_segment(a, b, p) && on_segment(a, b, q)) {
            segments_[cf].push_back({ff, t});
            seen[ff] = 1;
            break;
          }
        }
      }
    }
  }
  std::vector<double> face_weight(coarse.num_faces(), 0.0);
  for (int f : coarse.interior_faces()) face_weight[f] = 1.0;
  std::vector<int> elements(coarse.num_triangles());
  for (int T = 0; T < coarse.num_triangles(); ++T) elements[T] = T;
  c_ = assemble(face_weight, elements);
}

SparseMatrix QoiSystem::assemble(const std::vector<double>& face_weight,
                                 const std::vector<int>& elements) const {
  const SimplicialMesh& coarse = hierarchy_->coarse();
  const SimplicialMesh& fine = space_->mesh();
  const MultiplierSpace& M = multipliers_;
  const int m = M.degree();
  const double H = M.H();
  std::vector<Triplet> triplets;
  for (int F = 0; F < coarse.num_faces(); ++F) {
    if (face_weight[F] == 0.0 || coarse.face(F).boundary()) continue;
    const Point n = coarse.face(F).normal;
    const FacePolyBasis& pf = M.face_basis(F);
    for (const FaceSegment& seg : segments_[F]) {
      const Face& edge = fine.face(seg.fine_face);
      const Point p = fine.vertex(edge.vertices[0]);
      const Point q = fine.vertex(edge.vertices[1]);
      const auto v = triangle_vertices(fine, seg.fine_triangle);
      const auto nodes = space_->element_nodes(seg.fine_triangle);
      for (const auto& qp : line_rule(m + 2)) {
        const Point x = p + qp.t * (q - p);
        const auto phi = p2_shape(barycentric_coordinates(v, x));
        const double w = H * face_weight[F] * qp.weight * edge.length;
        for (int j = 0; j < M.J(); ++j) {
          const double pj = pf.value_at(j, x);
          const int row = M.face_index(F, j);
          for (int a = 0; a < 6; ++a) {
            for (int c = 0; c < 2; ++c) {
              const int dof = space_->velocity_dof(nodes[a], c);
              const double value = w * phi[a] * n[c] * pj;
              if (dof >= 0 && value != 0.0) triplets.emplace_back(row, dof, value);
            }
          }
        }
      }
    }
  }
  if (M.K() > 0) {
    for (int T : elements) {
      const ElementPolyBasis& basis = M.element_basis(T);
      std::vector<VectorPoly> functions;
      for (int k = 0; k < M.K(); ++k) functions.push_back(basis.complement_function(k));
      for (int t : hierarchy_->fine_elements(T)) {
        const auto v = triangle_vertices(fine, t);
        const auto nodes = space_->element_nodes(t);
        const double area = fine.area(t);
        for (const auto& qp : triangle_rule(m + 2)) {
          const Eigen::Vector3d lam(1.0 - qp.xi - qp.eta, qp.xi, qp.eta);
          const Point x = lam[0] * v[0] + lam[1] * v[1] + lam[2] * v[2];
          const auto phi = p2_shape(lam);
          const double w = 2.0 * area * qp.weight;
          for (int k = 0; k < M.K(); ++k) {
            const Point pk = functions[k](x);
            const int row = M.element_index(T, k);
            for (int a = 0; a < 6; ++a) {
              for (int c = 0; c < 2; ++c) {
                const int dof = space_->velocity_dof(nodes[a], c);
                const double value = w * phi[a] * pk[c];
                if (dof >= 0 && value != 0.0) triplets.emplace_back(row, dof, value);
              }
            }
          }
        }
      }
    }
  }
  SparseMatrix C(M.size(), space_->num_velocity_dofs());
  C.setFromTriplets(triplets.begin(), triplets.end());
  C.prune(0.0);
  return C;
}

SparseMatrix QoiSystem::assemble_cT(int element, const KappaTable& kappa) const {
  const SimplicialMesh& coarse = hierarchy_->coarse();
  kappa.validate(coarse);
  std::vector<double> face_weight(coarse.num_faces(), 0.0);
  for (int f : coarse.element_faces(element)) {
    if (!coarse.face(f).boundary()) face_weight[f] = kappa.weight(coarse, f, element);
  }
  return assemble(face_weight, {element});
}

Vector QoiSystem::average_fluxes(const Vector& v) const {
  const SimplicialMesh& coarse = hierarchy_->coarse();
  const SimplicialMesh& fine = space_->mesh();
  Vector flux = Vector::Zero(coarse.num_faces());
  for (int F : coarse.interior_faces()) {
    const Point n = coarse.face(F).normal;
    double sum = 0.0;
    for (const FaceSegment& seg : segments_[F]) {
      const Face& edge = fine.face(seg.fine_face);
      const Point p = fine.vertex(edge.vertices[0]);
      const Point q = fine.vertex(edge.vertices[1]);
      const auto vt = triangle_vertices(fine, seg.fine_triangle);
      for (const auto& qp : line_rule(2)) {
        const Point x = p + qp.t * (q - p);
        sum += qp.weight * edge.length *
               space_->evaluate(v, seg.fine_triangle, barycentric_coordinates(vt, x)).dot(n);
      }
    }
    flux[F] = sum / coarse.face(F).length;
  }
  return flux;
}

SparseMatrix assemble_c(const QoiSystem& qoi) { return qoi.c(); }

QuasiInterpolant::QuasiInterpolant(const SimplicialMesh& coarse, double min_det) {
  pairs_.assign(coarse.num_vertices(), std::nullopt);
  for (int z = 0; z < coarse.num_vertices(); ++z) {
    if (coarse.boundary_vertex(z)) continue;
    std::vector<int> faces;
    for (int f : coarse.vertex_faces(z)) {
      if (!coarse.face(f).boundary()) faces.push_back(f);
    }
    std::sort(faces.begin(), faces.end());
    double best = -1.0;
    std::array<int, 2> choice{-1, -1};
    for (std::size_t a = 0; a < faces.size(); ++a) {
      for (std::size_t b = a + 1; b < faces.size(); ++b) {
        const double det = std::abs(cross(coarse.face(faces[a]).normal, coarse.face(faces[b]).normal));
        if (det > best) {
          best = det;
          choice = {faces[a], faces[b]};
        }
      }
    }
    if (best < min_det) {
      throw StructuralError("no well-conditioned face pair at interior vertex " + std::to_string(z));
    }
    Eigen::Matrix2d M;
    M.row(0) = coarse.face(choice[0]).normal.transpose();
    M.row(1) = coarse.face(choice[1]).normal.transpose();
    pairs_[z] = NodePair{choice, M.inverse(), M.determinant()};
  }
}

std::vector<Point> QuasiInterpolant::apply(const Vector& average_flux) const {
  std::vector<Point> values(pairs_.size(), Point::Zero());
  for (std::size_t z = 0; z < pairs_.size(); ++z) {
    if (!pairs_[z]) continue;
    const auto& p = *pairs_[z];
    values[z] = p.inverse * Eigen::Vector2d(average_flux[p.faces[0]], average_flux[p.faces[1]]);
  }
  return values;
}

std::vector<Point> QuasiInterpolant::nodal_lift(int face, int j) const {
  std::vector<Point> theta(pairs_.size(), Point::Zero());
  if (j != 0) return theta;
  for (std::size_t z = 0; z < pairs_.size(); ++z) {
    if (!pairs_[z]) continue;
    const auto& p = *pairs_[z];
    for (int s = 0; s < 2; ++s) {
      if (p.faces[s] == face) theta[z] = p.inverse.col(s);
    }
  }
  return theta;
}

std::vector<Point> coarse_nodal_lift(const QuasiInterpolant& ih, int face, int j) {
  return ih.nodal_lift(face, j);
}

SparseMatrix coarse_p1_prolongation(const MeshHierarchy& hierarchy, const FineSpace& space) {
  const SimplicialMesh& coarse = hierarchy.coarse();
  const SimplicialMesh& fine = space.mesh();
  std::vector<char> done(space.num_nodes(), 0);
  std::vector<Triplet> triplets;
  for (int t = 0; t < fine.num_triangles(); ++t) {
    const int T = hierarchy.coarse_parent(t);
    const auto cv = triangle_vertices(coarse, T);
    const auto& ctri = coarse.triangle(T);
    for (int node : space.element_nodes(t)) {
      if (done[node] || space.velocity_dof(node, 0) < 0) continue;
      done[node] = 1;
      const Eigen::Vector3d lam = barycentric_coordinates(cv, space.node_point(node));
      for (int i = 0; i < 3; ++i) {
        const int z = ctri[i];
        if (coarse.boundary_vertex(z) || std::abs(lam[i]) < 1e-14) continue;
        for (int d = 0; d < 2; ++d) triplets.emplace_back(space.velocity_dof(node, d), 2 * z + d, lam[i]);
      }
    }
  }
  SparseMatrix P(space.num_velocity_dofs(), 2 * coarse.num_vertices());
  P.setFromTriplets(triplets.begin(), triplets.end());
  return P;
}

Vector nodal_vector(const std::vector<Point>& values) {
  Vector out(2 * values.size());
  for (std::size_t z = 0; z < values.size(); ++z) out.segment<2>(2 * z) = values[z];
  return out;
}

std::vector<Point> interp_IH(const QoiSystem& qoi, const QuasiInterpolant& ih, const Vector& v) {
  return ih.apply(qoi.average_fluxes(v));
}

}  // namespace msstokes
