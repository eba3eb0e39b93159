#pragma once

// Univariate and bivariate standard normal special functions.
//
// The bivariate CDF follows Genz's BVND: Gauss-Legendre quadrature over the
// correlation parameter (Drezner-Wesolowsky), with an asymptotic expansion
// for |rho| >= 0.925. Absolute accuracy is close to double precision.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <limits>
#include <numbers>
#include <string>

#include "cevit/error.hpp"

namespace cevit::normals {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934381868;
inline constexpr double kSqrt2Pi = 2.50662827463100050241576528481104525;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

template <std::floating_point T>
inline T std_pdf(T x) {
  return T(kInvSqrt2Pi) * std::exp(-x * x / T(2));
}

template <std::floating_point T>
inline T std_cdf(T x) {
  if (std::isinf(x)) return x > 0 ? T(1) : T(0);
  return T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

/// Inverse standard normal CDF. Acklam's rational approximation polished by
/// one Halley step against std_cdf, which brings it to full double precision.
inline double std_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("std_quantile: p must lie in (0, 1), got " + std::to_string(p));
  }
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549732539343734e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement; work in the lower tail so the residual keeps its digits.
  if (x <= 0.0) {
    const double e = std_cdf(x) - p;
    const double u = e * kSqrt2Pi * std::exp(x * x / 2.0);
    x -= u / (1.0 + x * u / 2.0);
  } else {
    const double e = std_cdf(-x) - (1.0 - p);
    const double u = -e * kSqrt2Pi * std::exp(x * x / 2.0);
    x -= u / (1.0 + x * u / 2.0);
  }
  return x;
}

/// Arguments of the standard bivariate normal CDF.
struct BvnSpec {
  double h = 0.0;
  double k = 0.0;
  double rho = 0.0;
};

namespace detail {

inline void check_bvn(double h, double k, double rho) {
  if (std::isnan(h) || std::isnan(k) || std::isnan(rho)) {
    throw DomainError("bvn: NaN argument");
  }
  if (!(std::abs(rho) < 1.0)) {
    throw DomainError("bvn: |rho| must be < 1, got " + std::to_string(rho));
  }
}

// Gauss-Legendre half-rules (positive abscissae) for 6, 12 and 20 points.
inline constexpr std::array<double, 3> kW6{0.1713244923791705, 0.3607615730481384,
                                           0.4679139345726904};
inline constexpr std::array<double, 3> kX6{0.9324695142031522, 0.6612093864662647,
                                           0.2386191860831970};
inline constexpr std::array<double, 6> kW12{0.04717533638651177, 0.1069393259953183,
                                            0.1600783285433464,  0.2031674267230659,
                                            0.2334925365383547,  0.2491470458134029};
inline constexpr std::array<double, 6> kX12{0.9815606342467191, 0.9041172563704750,
                                            0.7699026741943050, 0.5873179542866171,
                                            0.3678314989981802, 0.1252334085114692};
inline constexpr std::array<double, 10> kW20{
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
    0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
    0.1491729864726037,  0.1527533871307259};
inline constexpr std::array<double, 10> kX20{
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
    0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
    0.2277858511416451, 0.07652652113349733};

template <std::size_t N>
double upper_series(const std::array<double, N>& w, const std::array<double, N>& x, double h,
                    double k, double r) {
  const double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (std::size_t i = 0; i < N; ++i) {
      for (const double sign : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (sign * x[i] + 1.0) / 2.0);
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return bvn * asr / (2.0 * kTwoPi) + std_cdf(-h) * std_cdf(-k);
  }

  double kk = k;
  double hkk = hk;
  if (r < 0.0) {
    kk = -kk;
    hkk = -hkk;
  }
  const double as = (1.0 - r) * (1.0 + r);
  double a = std::sqrt(as);
  const double bs = (h - kk) * (h - kk);
  const double c = (4.0 - hkk) / 8.0;
  const double d = (12.0 - hkk) / 16.0;
  bvn = a * std::exp(-(bs / as + hkk) / 2.0) *
        (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
  if (hkk > -160.0) {
    const double bb = std::sqrt(bs);
    bvn -= std::exp(-hkk / 2.0) * kSqrt2Pi * std_cdf(-bb / a) * bb *
           (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
  }
  a /= 2.0;
  for (std::size_t i = 0; i < N; ++i) {
    for (const double sign : {-1.0, 1.0}) {
      const double xs = (a * (sign * x[i] + 1.0)) * (a * (sign * x[i] + 1.0));
      const double rs = std::sqrt(1.0 - xs);
      bvn += a * w[i] *
             (std::exp(-bs / (2.0 * xs) - hkk / (1.0 + rs)) / rs -
              std::exp(-(bs / xs + hkk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
    }
  }
  bvn = -bvn / kTwoPi;

  if (r > 0.0) return bvn + std_cdf(-std::max(h, kk));
  bvn = -bvn;
  if (kk > h) {
    bvn += h < 0.0 ? std_cdf(kk) - std_cdf(h) : std_cdf(-h) - std_cdf(-kk);
  }
  return bvn;
}

// P(X > h, Y > k) for finite h, k.
inline double bvn_upper(double h, double k, double r) {
  if (r == 0.0) return std_cdf(-h) * std_cdf(-k);
  const double ar = std::abs(r);
  double p;
  if (ar < 0.3) {
    p = upper_series(kW6, kX6, h, k, r);
  } else if (ar < 0.75) {
    p = upper_series(kW12, kX12, h, k, r);
  } else {
    p = upper_series(kW20, kX20, h, k, r);
  }
  return std::clamp(p, 0.0, 1.0);
}


// log Phi(w), accurate well below where Phi underflows.
inline double log_std_cdf(double w) {
  if (w > -35.0) return std::log(std_cdf(w));
  const double z = 1.0 / (w * w);
  const double series = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z * (1.0 - 9.0 * z))));
  return -0.5 * w * w - std::log(kSqrt2Pi) - std::log(-w) + std::log(series);
}

// Lower orthant by direct integration of phi(x) Phi((k - r x)/s) over x < h.
// The integrand is log-concave, so bracket the mode and integrate where it is
// within exp(-60) of its peak. Only used when the series result is tiny and
// its relative error is no longer controlled.
inline double bvn_lower_tail(double h, double k, double r) {
  if (std_cdf(k) < std_cdf(h)) std::swap(h, k);
  const double s = std::sqrt((1.0 - r) * (1.0 + r));
  auto g = [&](double x) { return -0.5 * x * x + log_std_cdf((k - r * x) / s); };
  auto dg = [&](double x) {
    const double w = (k - r * x) / s;
    return -x - (r / s) * std::exp(std::log(std_pdf(w)) - log_std_cdf(w));
  };
  double mode = h;
  if (dg(h) < 0.0) {
    double lo = h - 1.0;
    while (dg(lo) < 0.0) lo = h - 2.0 * (h - lo);
    double hi = h;
    for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + std::abs(hi)); ++i) {
      const double mid = 0.5 * (lo + hi);
      (dg(mid) < 0.0 ? hi : lo) = mid;
    }
    mode = 0.5 * (lo + hi);
  }
  const double peak = g(mode);
  auto edge = [&](double dir, double limit) {
    double step = 1.0;
    double near = mode;
    double far = mode + dir * step;
    while ((dir < 0 || far < limit) && g(far) > peak - 60.0) {
      near = far;
      step *= 2.0;
      far = mode + dir * step;
    }
    if (dir > 0 && far >= limit) return limit;
    for (int i = 0; i < 100 && std::abs(far - near) > 1e-9; ++i) {
      const double mid = 0.5 * (near + far);
      (g(mid) > peak - 60.0 ? near : far) = mid;
    }
    return far;
  };
  const double a = edge(-1.0, h);
  const double b = mode < h ? edge(1.0, h) : h;
  constexpr int kPanels = 16;
  const double width = (b - a) / kPanels;
  double sum = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double c = a + (p + 0.5) * width;
    for (std::size_t i = 0; i < kX20.size(); ++i) {
      for (const double sign : {-1.0, 1.0}) {
        sum += kW20[i] * std::exp(g(c + sign * kX20[i] * width / 2.0) - peak);
      }
    }
  }
  return sum * width / 2.0 * kInvSqrt2Pi * std::exp(peak);
}

}  // namespace detail

/// log Phi(x) without underflow for very negative x.
inline double log_std_cdf(double x) { return detail::log_std_cdf(x); }

/// phi(x) / Phi(x), stable in both tails.
inline double inverse_mills(double x) {
  return std::exp(-0.5 * x * x - std::log(kSqrt2Pi) - detail::log_std_cdf(x));
}

/// P(U <= h, V <= k) for a standard bivariate normal with correlation rho.
/// Infinite limits short-circuit to the univariate result.
inline double bvn_cdf(double h, double k, double rho) {
  detail::check_bvn(h, k, rho);
  if (h == -std::numeric_limits<double>::infinity() ||
      k == -std::numeric_limits<double>::infinity()) {
    return 0.0;
  }
  if (std::isinf(h)) return std_cdf(k);
  if (std::isinf(k)) return std_cdf(h);
  const double p = detail::bvn_upper(-h, -k, rho);
  if (p < 1e-10) return detail::bvn_lower_tail(h, k, rho);
  return p;
}

inline double bvn_cdf(const BvnSpec& s) { return bvn_cdf(s.h, s.k, s.rho); }

/// Standard bivariate normal density.
inline double bvn_pdf(double h, double k, double rho) {
  const double om = (1.0 - rho) * (1.0 + rho);
  return std::exp(-(h * h - 2.0 * rho * h * k + k * k) / (2.0 * om)) / (kTwoPi * std::sqrt(om));
}

struct BvnPartials {
  double dh = 0.0;
  double dk = 0.0;
};

/// Gradient of bvn_cdf in its two limits: dPhi2/dh = phi(h) Phi((k - rho h)/sqrt(1 - rho^2)).
inline BvnPartials bvn_cdf_partials(double h, double k, double rho) {
  detail::check_bvn(h, k, rho);
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  auto one = [s, rho](double a, double b) {
    if (std::isinf(a)) return 0.0;
    if (std::isinf(b)) return b > 0 ? std_pdf(a) : 0.0;
    return std_pdf(a) * std_cdf((b - rho * a) / s);
  };
  return {one(h, k), one(k, h)};
}

inline BvnPartials bvn_cdf_partials(const BvnSpec& s) { return bvn_cdf_partials(s.h, s.k, s.rho); }

/// Second derivatives of bvn_cdf in (h, k); finite arguments only.
struct BvnHessian {
  double hh = 0.0;
  double hk = 0.0;
  double kk = 0.0;
};

inline BvnHessian bvn_cdf_hessian(double h, double k, double rho) {
  detail::check_bvn(h, k, rho);
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  const double wh = (k - rho * h) / s;
  const double wk = (h - rho * k) / s;
  const double cross = bvn_pdf(h, k, rho);
  return {-h * std_pdf(h) * std_cdf(wh) - rho * cross, cross,
          -k * std_pdf(k) * std_cdf(wk) - rho * cross};
}

/// P(X1 <= x1, X2 <= x2) for X ~ N(mean, cov); cov given as (v11, v12, v22).
inline double bvn_cdf_general(double x1, double x2, double m1, double m2, double v11, double v12,
                              double v22) {
  if (!(v11 > 0.0 && v22 > 0.0 && v11 * v22 - v12 * v12 > 0.0) || std::isnan(v12)) {
    throw DomainError("bvn_cdf_general: covariance is not positive definite");
  }
  const double s1 = std::sqrt(v11);
  const double s2 = std::sqrt(v22);
  return bvn_cdf((x1 - m1) / s1, (x2 - m2) / s2, v12 / (s1 * s2));
}

}  // namespace cevit::normals
