#pragma once

// Moment estimates of the copula parameters from warm-up residuals and fitted
// probit latent means, plus repair of the assembled correlation matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cevit/copula.hpp"
#include "cevit/error.hpp"
#include "cevit/normals.hpp"

namespace cevit::estimator {

struct WarmupOutputs {
  std::vector<double> e1;     // y1 - m1hat
  std::vector<double> e2;     // y3 - m2hat
  std::vector<double> qhat1;  // fitted latent mean for y2
  std::vector<double> qhat2;  // fitted latent mean for y4

  std::size_t n() const { return e1.size(); }
};

struct ProjectionLimits {
  double max_abs_offdiag = 0.99;
  double min_eigenvalue = 1e-4;
};

struct ProjectionReport {
  Eigen::Matrix4d raw = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d projected = Eigen::Matrix4d::Identity();
  int clamped_offdiag = 0;
  int floored_eigenvalues = 0;
  int passes = 0;
  bool changed = false;
};

struct Diagnostics {
  ProjectionReport projection;
  int clamped_probabilities = 0;
  std::vector<std::string> notes;
};

struct Estimate {
  copula::CopulaParams params;
  Diagnostics diagnostics;
};

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Sample SD with the n-1 denominator.
inline double sd(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

/// Pearson correlation. Returns NaN if either series is constant.
inline double correlation(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x[i] - mx, b = y[i] - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

namespace detail {

inline bool is_valid(const Eigen::Matrix4d& g, const ProjectionLimits& lim) {
  if (!g.allFinite()) return false;
  for (int i = 0; i < 4; ++i) {
    if (std::abs(g(i, i) - 1.0) > 1e-12) return false;
    for (int j = i + 1; j < 4; ++j) {
      if (std::abs(g(i, j) - g(j, i)) > 1e-12 || std::abs(g(i, j)) > lim.max_abs_offdiag) {
        return false;
      }
    }
  }
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(g).eigenvalues()(0) >=
         lim.min_eigenvalue;
}

}  // namespace detail

/// Clamp off-diagonals, floor eigenvalues, rescale to unit diagonal. A single
/// pass normally suffices; the rescaling can pull the smallest eigenvalue back
/// under the floor, so repeat until the result is valid. Valid input is
/// returned untouched.
inline Eigen::Matrix4d project_to_correlation(const Eigen::Matrix4d& raw,
                                              ProjectionReport* report = nullptr,
                                              const ProjectionLimits& lim = {}) {
  ProjectionReport rep;
  rep.raw = raw;
  Eigen::Matrix4d g = 0.5 * (raw + raw.transpose());
  for (int i = 0; i < 16; ++i) {
    if (!std::isfinite(g(i))) g(i) = 0.0;
  }
  if (detail::is_valid(raw, lim)) {
    rep.projected = raw;
    if (report) *report = rep;
    return raw;
  }
  // Slightly inside the floor so the rescale rarely undoes it.
  const double floor = lim.min_eigenvalue * (1.0 + 1e-6);
  for (rep.passes = 1; rep.passes <= 50; ++rep.passes) {
    g.diagonal().setOnes();
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (i == j) continue;
        const double c = std::clamp(g(i, j), -lim.max_abs_offdiag, lim.max_abs_offdiag);
        if (c != g(i, j) && i < j) ++rep.clamped_offdiag;
        g(i, j) = c;
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(g);
    Eigen::Vector4d ev = es.eigenvalues();
    for (int i = 0; i < 4; ++i) {
      if (ev(i) < floor) {
        ev(i) = floor;
        ++rep.floored_eigenvalues;
      }
    }
    g = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    const Eigen::Vector4d d = g.diagonal().cwiseSqrt().cwiseInverse();
    g = d.asDiagonal() * g * d.asDiagonal();
    g = 0.5 * (g + g.transpose()).eval();
    g.diagonal().setOnes();
    if (detail::is_valid(g, lim)) break;
  }
  rep.projected = g;
  rep.changed = true;
  if (report) *report = rep;
  return g;
}

/// -Phi^{-1}(sigmoid(q)) with the probability clamped away from 0 and 1.
inline double probit_transform(double q, int* clamped = nullptr) {
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  double p = 1.0 / (1.0 + std::exp(-q));
  if (p < lo || p > hi) {
    p = std::clamp(p, lo, hi);
    if (clamped) ++*clamped;
  }
  return -normals::std_quantile(p);
}

inline Estimate estimate_empirical_full(const WarmupOutputs& w) {
  const std::size_t n = w.n();
  if (w.e2.size() != n || w.qhat1.size() != n || w.qhat2.size() != n) {
    throw UsageError("estimate_empirical: series lengths differ");
  }
  if (n < 3) throw UsageError("estimate_empirical: need at least 3 samples");
  for (const auto* s : {&w.e1, &w.e2, &w.qhat1, &w.qhat2}) {
    for (double v : *s) {
      if (!std::isfinite(v)) throw EstimationError("estimate_empirical: non-finite input");
    }
  }

  Estimate out;
  auto& diag = out.diagnostics;
  const double s1 = sd(w.e1), s2 = sd(w.e2);
  if (!(s1 > 0.0)) throw EstimationError("estimate_empirical: zero variance in residual e1");
  if (!(s2 > 0.0)) throw EstimationError("estimate_empirical: zero variance in residual e2");

  std::vector<double> t1(n), t2(n);
  for (std::size_t i = 0; i < n; ++i) {
    t1[i] = probit_transform(w.qhat1[i], &diag.clamped_probabilities);
    t2[i] = probit_transform(w.qhat2[i], &diag.clamped_probabilities);
  }

  // A constant fitted latent mean carries no information about the
  // association; record it and leave that correlation at zero.
  auto corr = [&](std::span<const double> a, std::span<const double> b, const char* name) {
    const double r = correlation(a, b);
    if (std::isnan(r)) {
      diag.notes.push_back(std::string("zero variance in ") + name + ", correlation set to 0");
      return 0.0;
    }
    return r;
  };

  Eigen::Matrix4d g = Eigen::Matrix4d::Identity();
  g(0, 1) = correlation(w.e1, w.e2);
  g(0, 2) = corr(w.e1, t1, "qhat1");
  g(0, 3) = corr(w.e1, t2, "qhat2");
  g(1, 2) = corr(w.e2, t1, "qhat1");
  g(1, 3) = corr(w.e2, t2, "qhat2");
  g(2, 3) = corr(w.qhat1, w.qhat2, "qhat1/qhat2");
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < i; ++j) g(i, j) = g(j, i);

  out.params.sigma1 = s1;
  out.params.sigma2 = s2;
  out.params.gamma = project_to_correlation(g, &diag.projection);
  copula::require_valid(out.params);
  return out;
}

inline copula::CopulaParams estimate_empirical(const WarmupOutputs& w) {
  return estimate_empirical_full(w).params;
}

/// Externally supplied parameters, validated and passed through.
inline Estimate estimate_oracle(const copula::CopulaParams& truth) {
  copula::require_valid(truth);
  Estimate out;
  out.params = truth;
  out.diagnostics.projection.raw = truth.gamma;
  out.diagnostics.projection.projected = truth.gamma;
  out.diagnostics.notes.emplace_back("oracle parameters");
  return out;
}

inline nlohmann::json matrix_json(const Eigen::Matrix4d& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < 4; ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

inline nlohmann::json to_json(const Diagnostics& d) {
  return {{"raw_gamma", matrix_json(d.projection.raw)},
          {"projected_gamma", matrix_json(d.projection.projected)},
          {"projection_changed", d.projection.changed},
          {"clamped_offdiag", d.projection.clamped_offdiag},
          {"floored_eigenvalues", d.projection.floored_eigenvalues},
          {"projection_passes", d.projection.passes},
          {"clamped_probabilities", d.clamped_probabilities},
          {"notes", d.notes}};
}

inline nlohmann::json to_json(const Estimate& e) {
  return {{"params", copula::to_json(e.params)}, {"diagnostics", to_json(e.diagnostics)}};
}

}  // namespace cevit::estimator
