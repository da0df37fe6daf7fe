#include "msstokes/polyspaces.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "msstokes/mesh.hpp"

namespace msstokes {

namespace {

double factorial(int n) {
  double r = 1.0;
  for (int k = 2; k <= n; ++k) r *= k;
  return r;
}

void powers(double x, int n, double* out) {
  out[0] = 1.0;
  for (int k = 1; k <= n; ++k) out[k] = out[k - 1] * x;
}

}  // namespace

ScaledFrame ScaledFrame::of_triangle(const Vertices3& v) {
  ScaledFrame frame;
  frame.center = (v[0] + v[1] + v[2]) / 3.0;
  frame.scale = std::max({(v[0] - v[1]).norm(), (v[1] - v[2]).norm(), (v[2] - v[0]).norm()});
  return frame;
}

ScalarPoly::ScalarPoly(ScaledFrame frame, int degree)
    : frame_(frame), degree_(degree), coeffs_(Vector::Zero(num_monomials(degree))) {}

double ScalarPoly::operator()(const Point& p) const {
  if (degree_ < 0) return 0.0;
  const Point X = frame_.to_local(p);
  double px[32], py[32];
  powers(X.x(), degree_, px);
  powers(X.y(), degree_, py);
  double sum = 0.0;
  for (int t = 0; t <= degree_; ++t) {
    for (int b = 0; b <= t; ++b) sum += coeffs_[monomial_index(t - b, b)] * px[t - b] * py[b];
  }
  return sum;
}

Point ScalarPoly::gradient(const Point& p) const {
  if (degree_ < 1) return Point::Zero();
  const Point X = frame_.to_local(p);
  double px[32], py[32];
  powers(X.x(), degree_, px);
  powers(X.y(), degree_, py);
  Point g = Point::Zero();
  for (int t = 1; t <= degree_; ++t) {
    for (int b = 0; b <= t; ++b) {
      const int a = t - b;
      const double c = coeffs_[monomial_index(a, b)];
      if (a > 0) g.x() += c * a * px[a - 1] * py[b];
      if (b > 0) g.y() += c * b * px[a] * py[b - 1];
    }
  }
  return g / frame_.scale;
}

VectorPoly ElementPolyBasis::gradient_function(int i) const {
  const auto [r, s] = gradient_pairs[i];
  VectorPoly p(frame, degree);
  if (r > 0) p.x.coeff(r - 1, s) = r;
  if (s > 0) p.y.coeff(r, s - 1) = s;
  return p;
}

VectorPoly ElementPolyBasis::complement_function(int k) const {
  const auto [r, s] = complement_pairs[k];
  VectorPoly p(frame, degree);
  p.x.coeff(r - 1, s) = -r;
  p.y.coeff(r, s - 1) = s;
  return p;
}

ElementPolyBasis build_element_basis(int element, const Vertices3& vertices, int m) {
  if (m < 0) throw ValidationError("polynomial degree must be non-negative");
  ElementPolyBasis basis;
  basis.element = element;
  basis.degree = m;
  basis.frame = ScaledFrame::of_triangle(vertices);
  for (int t = 1; t <= m + 1; ++t) {
    for (int s = 0; s <= t; ++s) {
      const int r = t - s;
      basis.gradient_pairs.push_back({r, s});
      if (r > 0 && s > 0) basis.complement_pairs.push_back({r, s});
    }
  }
  return basis;
}

Decomposition decompose(const VectorPoly& p, const ElementPolyBasis& basis) {
  const int m = basis.degree;
  if (p.degree() > m) throw ValidationError("decompose: polynomial degree exceeds basis degree");
  if ((p.frame().center - basis.frame.center).norm() > 1e-14 * basis.frame.scale ||
      std::abs(p.frame().scale - basis.frame.scale) > 1e-14 * basis.frame.scale) {
    throw ValidationError("decompose: polynomial frame differs from the element frame");
  }
  Decomposition d;
  d.g_coeffs = Vector::Zero(basis.dim_gradient());
  d.q_coeffs = Vector::Zero(basis.dim_complement());
  auto coeff = [&](const ScalarPoly& c, int a, int b) {
    return a + b <= p.degree() ? c.coeff(a, b) : 0.0;
  };
  // Homogeneous parts decouple; walk them from the top degree downwards.
  int gi = basis.dim_gradient();
  int qi = basis.dim_complement();
  for (int t = m + 1; t >= 1; --t) {
    for (int s = t; s >= 0; --s) {
      const int r = t - s;
      --gi;
      const double A = r > 0 ? coeff(p.x, r - 1, s) : 0.0;
      const double B = s > 0 ? coeff(p.y, r, s - 1) : 0.0;
      if (r > 0 && s > 0) {
        --qi;
        d.g_coeffs[gi] = 0.5 * (A / r + B / s);
        d.q_coeffs[qi] = 0.5 * (B / s - A / r);
      } else if (r > 0) {
        d.g_coeffs[gi] = A / r;
      } else {
        d.g_coeffs[gi] = B / s;
      }
    }
  }
  d.g = VectorPoly(basis.frame, m);
  d.q = VectorPoly(basis.frame, m);
  for (int i = 0; i < basis.dim_gradient(); ++i) {
    const auto f = basis.gradient_function(i);
    d.g.x.coeffs() += d.g_coeffs[i] * f.x.coeffs();
    d.g.y.coeffs() += d.g_coeffs[i] * f.y.coeffs();
  }
  for (int k = 0; k < basis.dim_complement(); ++k) {
    const auto f = basis.complement_function(k);
    d.q.x.coeffs() += d.q_coeffs[k] * f.x.coeffs();
    d.q.y.coeffs() += d.q_coeffs[k] * f.y.coeffs();
  }
  return d;
}

double seminorm_Pm(const ScalarPoly& p, int m) {
  if (p.degree() < m) return 0.0;
  double sum = 0.0;
  const double scale = std::pow(p.frame().scale, -m);
  for (int b = 0; b <= m; ++b) {
    const int a = m - b;
    const double d = p.coeff(a, b) * factorial(a) * factorial(b) * scale;
    sum += d * d;
  }
  return std::sqrt(sum);
}

double seminorm_Pm(const VectorPoly& p, int m) {
  return std::hypot(seminorm_Pm(p.x, m), seminorm_Pm(p.y, m));
}

double integrate_triangle(const Vertices3& v, int degree,
                          const std::function<double(const Point&)>& f) {
  const Point e1 = v[1] - v[0];
  const Point e2 = v[2] - v[0];
  const double jac = std::abs(e1.x() * e2.y() - e1.y() * e2.x());
  double sum = 0.0;
  for (const auto& q : triangle_rule(degree)) sum += q.weight * f(v[0] + q.xi * e1 + q.eta * e2);
  return sum * jac;
}

Vertices3 triangle_vertices(const SimplicialMesh& mesh, int t) {
  const auto& tri = mesh.triangle(t);
  return {mesh.vertex(tri[0]), mesh.vertex(tri[1]), mesh.vertex(tri[2])};
}

PiecewisePolyField project_PiHm(const SimplicialMesh& mesh, const VectorFunction& f, int m,
                                int quad_degree) {
  if (m < 0) throw ValidationError("projection degree must be non-negative");
  PiecewisePolyField field;
  field.degree = m;
  field.values.reserve(mesh.num_triangles());
  const int n = num_monomials(m);
  const int degree = std::max(2 * m, quad_degree);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto v = triangle_vertices(mesh, t);
    const ScaledFrame frame = ScaledFrame::of_triangle(v);
    const Point e1 = v[1] - v[0];
    const Point e2 = v[2] - v[0];
    const double jac = std::abs(e1.x() * e2.y() - e1.y() * e2.x());
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 2);
    Vector phi(n);
    double px[32], py[32];
    for (const auto& q : triangle_rule(degree)) {
      const Point x = v[0] + q.xi * e1 + q.eta * e2;
      const Point X = frame.to_local(x);
      powers(X.x(), m, px);
      powers(X.y(), m, py);
      for (int tt = 0; tt <= m; ++tt) {
        for (int b = 0; b <= tt; ++b) phi[monomial_index(tt - b, b)] = px[tt - b] * py[b];
      }
      const double w = q.weight * jac;
      mass.noalias() += w * phi * phi.transpose();
      const Point fx = f(x);
      rhs.col(0) += w * fx.x() * phi;
      rhs.col(1) += w * fx.y() * phi;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(mass);
    if (llt.info() != Eigen::Success) {
      throw StructuralError("singular element mass matrix on element " + std::to_string(t));
    }
    const Eigen::MatrixXd c = llt.solve(rhs);
    VectorPoly p(frame, m);
    p.x.coeffs() = c.col(0);
    p.y.coeffs() = c.col(1);
    field.values.push_back(std::move(p));
  }
  return field;
}

PressureLift local_pressure_lift(const VectorPoly& fT, const ElementPolyBasis& basis,
                                 const Vertices3& vertices) {
  const Decomposition d = decompose(fT, basis);
  PressureLift lift;
  lift.q = d.q;
  lift.p_loc = ScalarPoly(basis.frame, basis.degree + 1);
  // gradient basis (r, s) equals scale * ∇(X^r Y^s)
  for (int i = 0; i < basis.dim_gradient(); ++i) {
    const auto [r, s] = basis.gradient_pairs[i];
    lift.p_loc.coeff(r, s) = d.g_coeffs[i] * basis.frame.scale;
  }
  const double area = integrate_triangle(vertices, 0, [](const Point&) { return 1.0; });
  const double mean =
      integrate_triangle(vertices, basis.degree + 1, [&](const Point& x) { return lift.p_loc(x); }) /
      area;
  lift.p_loc.coeff(0, 0) -= mean;
  return lift;
}

double FacePolyBasis::value(int j, double t) const {
  const double x = 2.0 * t - 1.0;
  double p0 = 1.0;
  if (j == 0) return p0;
  double p1 = x;
  for (int k = 2; k <= j; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

FacePolyBasis build_face_basis(const SimplicialMesh& mesh, int face, int m) {
  if (m < 0) throw ValidationError("face polynomial degree must be non-negative");
  const Face& f = mesh.face(face);
  FacePolyBasis basis;
  basis.face = face;
  basis.degree = m;
  basis.a = mesh.vertex(f.vertices[0]);
  basis.b = mesh.vertex(f.vertices[1]);
  basis.length = f.length;
  return basis;
}

}  // namespace msstokes
