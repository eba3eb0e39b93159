#pragma once

// Test-only reference computations. Nothing here calls into the library code
// paths it is used to check.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace cevit::oracle {

inline long double phi_ld(long double x) {
  return std::exp(-x * x / 2.0L) / std::sqrt(2.0L * std::numbers::pi_v<long double>);
}

inline long double cdf_ld(long double x) {
  return 0.5L * std::erfc(-x / std::sqrt(2.0L));
}

/// Adaptive Gauss-Kronrod integral over [a, b] split at the given breakpoints.
inline long double integrate(const std::function<long double(long double)>& f, long double a,
                             long double b, std::vector<long double> cuts = {}) {
  using Gk = boost::math::quadrature::gauss_kronrod<long double, 31>;
  cuts.push_back(a);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  long double total = 0.0L;
  long double prev = a;
  for (long double c : cuts) {
    if (c <= prev || c > b) continue;
    total += Gk::integrate(f, prev, c, 15, 1e-14L);
    prev = c;
  }
  return total;
}

/// Phi2(h, k; rho) by integrating phi(x) Phi((k - rho x)/sqrt(1 - rho^2)) over
/// x < h in extended precision; the inner dimension is the exact conditional CDF.
inline long double bvn_cdf(long double h, long double k, long double rho) {
  const long double s = std::sqrt((1.0L - rho) * (1.0L + rho));
  auto f = [&](long double x) { return phi_ld(x) * cdf_ld((k - rho * x) / s); };
  const long double lo = -40.0L;
  const long double hi = std::min(h, 40.0L);
  if (hi <= lo) return 0.0L;
  std::vector<long double> cuts;
  if (rho != 0.0L) {
    const long double x0 = k / rho;
    const long double width = s / std::abs(rho);
    for (long double m : {-12.0L, -4.0L, -1.0L, 0.0L, 1.0L, 4.0L, 12.0L}) {
      cuts.push_back(x0 + m * width);
    }
  }
  for (long double m : {-8.0L, -3.0L, 0.0L, 3.0L, 8.0L}) cuts.push_back(m);
  return integrate(f, lo, hi, cuts);
}

/// Central difference with one Richardson extrapolation step.
inline double derivative(const std::function<double(double)>& f, double x, double step = 1e-3) {
  auto central = [&](double hh) { return (f(x + hh) - f(x - hh)) / (2.0 * hh); };
  const double d1 = central(step);
  const double d2 = central(step / 2.0);
  return (4.0 * d2 - d1) / 3.0;
}

}  // namespace cevit::oracle
