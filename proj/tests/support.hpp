#pragma once

// Random inputs and direct simulators shared by the test binaries.

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "cevit/copula.hpp"

namespace cevit::testing {

/// Random correlation matrix from a two-factor model; produces |rho| up to ~0.95.
inline Eigen::Matrix4d random_correlation(std::mt19937_64& rng, double max_abs = 0.95) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u(0.02, 1.0);
  for (;;) {
    Eigen::Matrix<double, 4, 2> l;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j) l(i, j) = n01(rng);
    Eigen::Matrix4d c = l * l.transpose();
    for (int i = 0; i < 4; ++i) c(i, i) += u(rng);
    const Eigen::Vector4d d = c.diagonal().cwiseSqrt().cwiseInverse();
    c = d.asDiagonal() * c * d.asDiagonal();
    bool ok = true;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j && std::abs(c(i, j)) > max_abs) ok = false;
    if (ok) return c;
  }
}

inline copula::CopulaParams random_params(std::mt19937_64& rng, double max_abs = 0.95) {
  std::uniform_real_distribution<double> s(0.4, 2.5);
  return {s(rng), s(rng), random_correlation(rng, max_abs)};
}

inline copula::MarginalMeans random_means(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> m(-2.0, 2.0);
  std::uniform_real_distribution<double> q(-1.5, 1.5);
  return {m(rng), m(rng), q(rng), q(rng)};
}

/// Draw a label from the copula model by sampling the latent vector directly.
inline copula::MixedLabel draw_label(std::mt19937_64& rng, const copula::MarginalMeans& m,
                                     const copula::CopulaParams& p) {
  static thread_local std::normal_distribution<double> n01;
  const Eigen::Matrix4d chol = p.gamma.llt().matrixL();
  Eigen::Vector4d e;
  for (int i = 0; i < 4; ++i) e[i] = n01(rng);
  const Eigen::Vector4d u = chol * e;
  return {m.m1 + p.sigma1 * u[0], u[2] >= -m.q1 ? 1 : 0, m.m2 + p.sigma2 * u[1],
          u[3] >= -m.q2 ? 1 : 0};
}

inline copula::MixedLabel random_label(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> y(-3.0, 3.0);
  std::bernoulli_distribution b(0.5);
  return {y(rng), b(rng) ? 1 : 0, y(rng), b(rng) ? 1 : 0};
}

}  // namespace cevit::testing
