#pragma once

#include <array>
#include <functional>
#include <vector>

#include "msstokes/common.hpp"
#include "msstokes/quadrature.hpp"

namespace msstokes {

class SimplicialMesh;

using Vertices3 = std::array<Point, 3>;

/// Number of bivariate monomials of total degree <= d.
constexpr int num_monomials(int d) { return d < 0 ? 0 : (d + 1) * (d + 2) / 2; }
/// Index of X^a Y^b: graded by total degree, then by the power of Y.
constexpr int monomial_index(int a, int b) { return (a + b) * (a + b + 1) / 2 + b; }

/// Local coordinates X = (x - center) / scale used by every element polynomial.
struct ScaledFrame {
  Point center = Point::Zero();
  double scale = 1.0;

  Point to_local(const Point& p) const { return (p - center) / scale; }
  static ScaledFrame of_triangle(const Vertices3& v);
};

/// Scalar polynomial of total degree <= degree in scaled monomials.
class ScalarPoly {
 public:
  ScalarPoly() = default;
  ScalarPoly(ScaledFrame frame, int degree);

  int degree() const { return degree_; }
  const ScaledFrame& frame() const { return frame_; }
  double& coeff(int a, int b) { return coeffs_[monomial_index(a, b)]; }
  double coeff(int a, int b) const { return coeffs_[monomial_index(a, b)]; }
  Vector& coeffs() { return coeffs_; }
  const Vector& coeffs() const { return coeffs_; }

  double operator()(const Point& p) const;
  Point gradient(const Point& p) const;

 private:
  ScaledFrame frame_;
  int degree_ = -1;
  Vector coeffs_;
};

/// Vector-valued polynomial; both components share a frame and degree.
struct VectorPoly {
  ScalarPoly x;
  ScalarPoly y;

  VectorPoly() = default;
  VectorPoly(ScaledFrame frame, int degree) : x(frame, degree), y(frame, degree) {}

  int degree() const { return x.degree(); }
  const ScaledFrame& frame() const { return x.frame(); }
  Point operator()(const Point& p) const { return {x(p), y(p)}; }
};

/// Bases of G^m(T) = ∇P^{m+1}(T) and of the complement Q^m(T) on one element.
///
/// For each pair (r, s) with 1 <= r + s <= m + 1 the gradient basis holds
///   (r X^{r-1} Y^s, s X^r Y^{s-1}) = scale * ∇(X^r Y^s),
/// and, when r, s > 0, the complement basis holds
///   (-r X^{r-1} Y^s, s X^r Y^{s-1}).
struct ElementPolyBasis {
  int element = -1;
  int degree = 0;
  ScaledFrame frame;
  std::vector<std::array<int, 2>> gradient_pairs;
  std::vector<std::array<int, 2>> complement_pairs;

  int dim_gradient() const { return static_cast<int>(gradient_pairs.size()); }
  int dim_complement() const { return static_cast<int>(complement_pairs.size()); }
  VectorPoly gradient_function(int i) const;
  VectorPoly complement_function(int k) const;
};

ElementPolyBasis build_element_basis(int element, const Vertices3& vertices, int m);

/// dim Q^m(T) in two dimensions.
constexpr int complement_dimension(int m) { return m <= 0 ? 0 : m * (m + 1) / 2; }

struct Decomposition {
  Vector g_coeffs;  // against ElementPolyBasis::gradient_pairs
  Vector q_coeffs;  // against ElementPolyBasis::complement_pairs
  VectorPoly g;
  VectorPoly q;
};

/// Splits p ∈ (P^m)^2 into g ∈ G^m and q ∈ Q^m. p must use the basis frame.
Decomposition decompose(const VectorPoly& p, const ElementPolyBasis& basis);

/// sqrt(Σ_{|α|=m} |D^α p|^2) summed over components.
double seminorm_Pm(const ScalarPoly& p, int m);
double seminorm_Pm(const VectorPoly& p, int m);

/// Integrates f over the triangle with a rule exact for polynomials of the
/// given degree.
double integrate_triangle(const Vertices3& v, int degree, const std::function<double(const Point&)>& f);

Vertices3 triangle_vertices(const SimplicialMesh& mesh, int t);

/// Per-element vector polynomials, discontinuous across elements.
struct PiecewisePolyField {
  int degree = 0;
  std::vector<VectorPoly> values;

  Point operator()(int element, const Point& p) const { return values[element](p); }
};

using VectorFunction = std::function<Point(const Point&)>;

/// Element-wise L2 projection Π_H^m onto (P^m(T_H))^2.
PiecewisePolyField project_PiHm(const SimplicialMesh& mesh, const VectorFunction& f, int m,
                                int quad_degree);

struct PressureLift {
  ScalarPoly p_loc;  // degree m+1, zero mean over T
  VectorPoly q;      // in Q^m(T)
};

/// Solves ∇p_loc + q = fT on T with q ∈ Q^m(T) and ∫_T p_loc = 0.
PressureLift local_pressure_lift(const VectorPoly& fT, const ElementPolyBasis& basis,
                                 const Vertices3& vertices);

/// Shifted Legendre polynomials in the arclength parameter t ∈ [0,1] of a face,
/// running from vertices[0] to vertices[1]. Index 0 is the constant 1.
struct FacePolyBasis {
  int face = -1;
  int degree = 0;
  Point a = Point::Zero();
  Point b = Point::Zero();
  double length = 0.0;

  int size() const { return degree + 1; }
  double parameter(const Point& x) const { return (x - a).dot(b - a) / (length * length); }
  double value(int j, double t) const;
  double value_at(int j, const Point& x) const { return value(j, parameter(x)); }
  /// ∫_F p_j p_i dσ = δ_ij |F| / (2j + 1).
  double gram(int j) const { return length / (2.0 * j + 1.0); }
};

FacePolyBasis build_face_basis(const SimplicialMesh& mesh, int face, int m);

}  // namespace msstokes
