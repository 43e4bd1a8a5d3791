#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace knfp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Argument/contract violations are reported by exception; numerical failures
// (blow-up guards, divergence flags) are reported through result structs.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline bool nearly_equal(double a, double b, double tol) {
  return std::abs(a - b) <= tol * (1.0 + std::abs(a) + std::abs(b));
}

}  // namespace knfp
