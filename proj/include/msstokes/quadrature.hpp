#pragma once

#include <vector>

#include "msstokes/common.hpp"

namespace msstokes {

struct LineQuadPoint {
  double t;  // in [0, 1]
  double weight;
};

/// Weights on the reference triangle (0,0),(1,0),(0,1) sum to 1/2.
struct TriangleQuadPoint {
  double xi;
  double eta;
  double weight;
};

/// Gauss-Legendre rule with n points mapped to [0, 1].
std::vector<LineQuadPoint> gauss_legendre(int n);

/// Gauss rule on [0, 1] integrating polynomials up to `degree` exactly.
const std::vector<LineQuadPoint>& line_rule(int degree);

/// Collapsed (Duffy) tensor Gauss rule on the reference triangle, exact for
/// polynomials of total degree <= `degree`.
const std::vector<TriangleQuadPoint>& triangle_rule(int degree);

}  // namespace msstokes
