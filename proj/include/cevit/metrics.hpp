#pragma once

// Held-out metrics: MSE for the continuous outputs, accuracy and AUC for the
// binary ones. "left" is (y1, y2), "right" is (y3, y4).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cevit/copula.hpp"
#include "cevit/error.hpp"

namespace cevit::metrics {

/// Mann-Whitney AUC with average ranks on ties. nullopt when only one class
/// is present.
inline std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] == 1) {
        rank_sum += avg;
        ++pos;
      }
    }
    i = j + 1;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

inline double mse(std::span<const double> pred, std::span<const double> y) {
  if (pred.size() != y.size() || y.empty()) throw UsageError("mse: bad lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return s / static_cast<double>(y.size());
}

/// Share of latent means on the correct side of 0 (probability 0.5).
inline double accuracy(std::span<const double> q, std::span<const int> y) {
  if (q.size() != y.size() || y.empty()) throw UsageError("accuracy: bad lengths");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += ((q[i] >= 0.0 ? 1 : 0) == y[i]);
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

struct MetricSet {
  double mse_left = 0.0, mse_right = 0.0;
  double acc_left = 0.0, acc_right = 0.0;
  double auc_left = std::nan(""), auc_right = std::nan("");  // NaN when undefined
  bool auc_left_defined = false, auc_right_defined = false;
};

/// pred rows are (m1, m2, q1, q2), one column per sample.
inline MetricSet evaluate(const Eigen::Matrix<double, 4, Eigen::Dynamic>& pred,
                          std::span<const copula::MixedLabel> labels) {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(pred.cols()) != n || n == 0) {
    throw UsageError("metrics: prediction/label count mismatch");
  }
  std::vector<double> y1(n), y3(n), m1(n), m2(n), q1(n), q2(n);
  std::vector<int> y2(n), y4(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    y1[i] = labels[i].y1;
    y3[i] = labels[i].y3;
    y2[i] = labels[i].y2;
    y4[i] = labels[i].y4;
    m1[i] = pred(0, j);
    m2[i] = pred(1, j);
    q1[i] = pred(2, j);
    q2[i] = pred(3, j);
  }
  MetricSet m;
  m.mse_left = mse(m1, y1);
  m.mse_right = mse(m2, y3);
  m.acc_left = accuracy(q1, y2);
  m.acc_right = accuracy(q2, y4);
  if (auto a = auc(q1, y2)) {
    m.auc_left = *a;
    m.auc_left_defined = true;
  }
  if (auto a = auc(q2, y4)) {
    m.auc_right = *a;
    m.auc_right_defined = true;
  }
  return m;
}

}  // namespace cevit::metrics
