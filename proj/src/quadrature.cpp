#include "msstokes/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace msstokes {

std::vector<LineQuadPoint> gauss_legendre(int n) {
  if (n < 1) throw ValidationError("gauss_legendre: n must be positive");
  std::vector<LineQuadPoint> rule(n);
  for (int i = 0; i < n; ++i) {
    // Newton iteration on P_n starting from the Chebyshev-like guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node for the weight.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule[n - 1 - i] = {0.5 * (x + 1.0), 0.5 * w};
  }
  return rule;
}

const std::vector<LineQuadPoint>& line_rule(int degree) {
  static std::mutex mutex;
  static std::map<int, std::vector<LineQuadPoint>> cache;
  const int n = std::max(1, (degree + 2) / 2);
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_legendre(n)).first;
  return it->second;
}

const std::vector<TriangleQuadPoint>& triangle_rule(int degree) {
  static std::mutex mutex;
  static std::map<int, std::vector<TriangleQuadPoint>> cache;
  // The Duffy Jacobian adds one degree in the collapsed direction.
  const int n = std::max(1, (degree + 3) / 2);
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const auto g = gauss_legendre(n);
  std::vector<TriangleQuadPoint> rule;
  rule.reserve(n * n);
  for (const auto& a : g) {
    for (const auto& b : g) {
      rule.push_back({a.t, b.t * (1.0 - a.t), a.weight * b.weight * (1.0 - a.t)});
    }
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

}  // namespace msstokes
