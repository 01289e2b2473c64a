#pragma once

#include <array>
#include <cmath>

namespace pcp {

/// Conditional probabilities of the four (coverage, claim) outcomes,
/// in (00, 01, 10, 11) order.
struct ProbQuad {
  double p00 = 0.25;
  double p01 = 0.25;
  double p10 = 0.25;
  double p11 = 0.25;

  /// Pr(c = 1)
  double p() const { return p10 + p11; }
  /// Pr(r = 1)
  double q() const { return p01 + p11; }
  double sum() const { return p00 + p01 + p10 + p11; }

  double operator[](int k) const {
    switch (k) {
      case 0: return p00;
      case 1: return p01;
      case 2: return p10;
      default: return p11;
    }
  }
  std::array<double, 4> as_array() const { return {p00, p01, p10, p11}; }
  static ProbQuad from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

  bool valid(double tol = 1e-9) const {
    for (double v : as_array())
      if (!(v >= 0.0 && v <= 1.0)) return false;
    return std::abs(sum() - 1.0) <= tol;
  }
  bool operator==(const ProbQuad&) const = default;
};

}  // namespace pcp
