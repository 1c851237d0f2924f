#pragma once

// Bisection on Q(w) - F(w), which never increases in w. Keeps r(lo) > 0 >= r(hi),
// so it lands on the leftmost root, the one the closed form picks when the
// root set is an interval. Shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>

#include "strutservo/plant.hpp"

namespace strutservo::testing {

inline Equilibrium bisect_equilibrium(const StrutParams& p, const SoilParams& s, double u, double dT) {
  auto reaction = [&](double w) {
    return std::max(0.0, p.axial_stiffness_kn_per_mm * (w + u + p.thermal_coeff_per_c * p.length_mm * dT));
  };
  auto residual = [&](double w) {
    const double q = std::clamp(s.driving_load_kn - s.soil_stiffness_kn_per_mm * w, s.load_bounds_kn.lo,
                                s.load_bounds_kn.hi);
    return q - reaction(w);
  };
  double lo = -1e7, hi = 1e7;
  for (int i = 0; i < 400 && lo < hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (residual(mid) > 0 ? lo : hi) = mid;
  }
  return {hi, reaction(hi)};
}

inline bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(1.0, std::abs(b)); }

}  // namespace strutservo::testing
