#pragma once

// Four-dimensional mixed Gaussian copula over (y1, y2, y3, y4): y1, y3 continuous,
// y2, y4 probit-binary. The latent order is (u1, u2, u3, u4) where u1, u2 are the
// standardized continuous responses and u3, u4 the binary latents, so that
// y2 = 1{u3 >= -q1} and y4 = 1{u4 >= -q2}.
//
// The joint log density splits into the bivariate Gaussian density of (y1, y3)
// and the orthant probability of (u3, u4) conditional on (u1, u2).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cevit/error.hpp"
#include "cevit/normals.hpp"

namespace cevit::copula {

/// sigma1, sigma2 and the latent correlation matrix.
struct CopulaParams {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  Eigen::Matrix4d gamma = Eigen::Matrix4d::Identity();

  double rho(int i, int j) const { return gamma(i, j); }

  static CopulaParams independent(double s1 = 1.0, double s2 = 1.0) {
    return {s1, s2, Eigen::Matrix4d::Identity()};
  }
};

/// Model outputs for one sample. Note the field order: continuous means first,
/// then the probit latent means.
struct MarginalMeans {
  double m1 = 0.0;  // E[y1]
  double m2 = 0.0;  // E[y3]
  double q1 = 0.0;  // probit latent mean of y2
  double q2 = 0.0;  // probit latent mean of y4
};

/// Derivatives with respect to (m1, m2, q1, q2), in that order.
using OutputVec = Eigen::Vector4d;
using OutputMat = Eigen::Matrix4d;

inline OutputVec to_vec(const MarginalMeans& m) { return {m.m1, m.m2, m.q1, m.q2}; }
inline MarginalMeans from_vec(const OutputVec& v) { return {v[0], v[1], v[2], v[3]}; }

struct MixedLabel {
  double y1 = 0.0;
  int y2 = 0;
  double y3 = 0.0;
  int y4 = 0;
};

struct ConditionalLatent {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
};

/// Every violated invariant, as human-readable strings. Empty means valid.
inline std::vector<std::string> validate(const CopulaParams& p) {
  std::vector<std::string> out;
  if (!(p.sigma1 > 0.0) || !std::isfinite(p.sigma1)) out.emplace_back("sigma1 not positive");
  if (!(p.sigma2 > 0.0) || !std::isfinite(p.sigma2)) out.emplace_back("sigma2 not positive");
  if (!p.gamma.allFinite()) {
    out.emplace_back("gamma has non-finite entries");
    return out;
  }
  for (int i = 0; i < 4; ++i) {
    if (std::abs(p.gamma(i, i) - 1.0) > 1e-12) {
      out.emplace_back("gamma diagonal entry " + std::to_string(i) + " is not 1");
    }
    for (int j = i + 1; j < 4; ++j) {
      if (std::abs(p.gamma(i, j) - p.gamma(j, i)) > 1e-12) {
        out.emplace_back("gamma not symmetric at (" + std::to_string(i) + "," +
                         std::to_string(j) + ")");
      }
      if (!(std::abs(p.gamma(i, j)) < 1.0)) {
        out.emplace_back("gamma off-diagonal (" + std::to_string(i) + "," + std::to_string(j) +
                         ") outside (-1, 1)");
      }
    }
  }
  const Eigen::Matrix4d sym = 0.5 * (p.gamma + p.gamma.transpose());
  const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(sym).eigenvalues()(0);
  if (!(min_eig > 0.0)) {
    out.emplace_back("gamma not positive definite (min eigenvalue " + std::to_string(min_eig) +
                     ")");
  }
  return out;
}

inline void require_valid(const CopulaParams& p) {
  const auto v = validate(p);
  if (!v.empty()) {
    std::string msg = "invalid copula parameters:";
    for (const auto& s : v) msg += " " + s + ";";
    throw ParameterError(msg);
  }
}

/// Quadrant probabilities below this are clamped before taking logs.
inline constexpr double kProbFloor = 1e-300;

/// Precomputed conditional structure for one parameter set. Construction validates.
class Kernel {
 public:
  explicit Kernel(const CopulaParams& p) : p_(p) {
    require_valid(p);
    const Eigen::Matrix2d g11 = p.gamma.topLeftCorner<2, 2>();
    const Eigen::Matrix2d g21 = p.gamma.bottomLeftCorner<2, 2>();
    const Eigen::Matrix2d g22 = p.gamma.bottomRightCorner<2, 2>();
    const Eigen::Matrix2d g11_inv = g11.inverse();
    a_ = g21 * g11_inv;
    v_ = g22 - a_ * g21.transpose();
    v_ = 0.5 * (v_ + v_.transpose());
    if (!(v_(0, 0) > 0.0 && v_.determinant() > 0.0)) {
      throw ParameterError("conditional latent covariance is not positive definite");
    }
    t1_ = std::sqrt(v_(0, 0));
    t2_ = std::sqrt(v_(1, 1));
    r_ = v_(0, 1) / (t1_ * t2_);
    rho12_ = p.gamma(0, 1);
    om12_ = (1.0 - rho12_) * (1.0 + rho12_);
    log_norm_ = -std::log(normals::kTwoPi * p.sigma1 * p.sigma2 * std::sqrt(om12_));
  }

  const CopulaParams& params() const { return p_; }
  const Eigen::Matrix2d& regression() const { return a_; }

  ConditionalLatent conditional(const MixedLabel& y, const MarginalMeans& m) const {
    return {a_ * standardized(y, m), v_};
  }

  /// Bivariate Gaussian log density of (y1, y3), including its normalizing constant.
  double continuous_part(const MixedLabel& y, const MarginalMeans& m) const {
    const Eigen::Vector2d z = standardized(y, m);
    const double quad = z[0] * z[0] - 2.0 * rho12_ * z[0] * z[1] + z[1] * z[1];
    return log_norm_ - quad / (2.0 * om12_);
  }

  double quadrant(const MixedLabel& y, const MarginalMeans& m) const {
    const Orthant o = orthant(y, m);
    return normals::bvn_cdf(o.a1, o.a2, o.r);
  }

  double log_density(const MixedLabel& y, const MarginalMeans& m) const {
    return continuous_part(y, m) + std::log(std::max(quadrant(y, m), kProbFloor));
  }

  /// Gradient of log_density over (m1, m2, q1, q2).
  OutputVec gradient(const MixedLabel& y, const MarginalMeans& m) const {
    OutputVec g;
    evaluate(y, m, &g, nullptr);
    return g;
  }

  /// Log density, plus gradient and Hessian over (m1, m2, q1, q2) when requested.
  double evaluate(const MixedLabel& y, const MarginalMeans& m, OutputVec* grad,
                  OutputMat* hess) const {
    const Eigen::Vector2d z = standardized(y, m);
    const double s1 = p_.sigma1, s2 = p_.sigma2;
    const double quad = z[0] * z[0] - 2.0 * rho12_ * z[0] * z[1] + z[1] * z[1];
    const Orthant o = orthant_from_z(y, m, z);
    const double prob = std::max(normals::bvn_cdf(o.a1, o.a2, o.r), kProbFloor);
    const double value = log_norm_ - quad / (2.0 * om12_) + std::log(prob);
    if (grad == nullptr && hess == nullptr) return value;

    // Orthant limits are affine in the outputs: a = J * (m1, m2, q1, q2) + const.
    Eigen::Matrix<double, 2, 4> jac;
    jac << o.sg1 / t1_ * a_(0, 0) / s1, o.sg1 / t1_ * a_(0, 1) / s2, -o.sg1 / t1_, 0.0,
        o.sg2 / t2_ * a_(1, 0) / s1, o.sg2 / t2_ * a_(1, 1) / s2, 0.0, -o.sg2 / t2_;
    const auto d = normals::bvn_cdf_partials(o.a1, o.a2, o.r);
    const Eigen::Vector2d gd(d.dh / prob, d.dk / prob);

    if (grad != nullptr) {
      OutputVec g = jac.transpose() * gd;
      g[0] += (z[0] - rho12_ * z[1]) / (om12_ * s1);
      g[1] += (z[1] - rho12_ * z[0]) / (om12_ * s2);
      *grad = g;
    }
    if (hess != nullptr) {
      const auto h2 = normals::bvn_cdf_hessian(o.a1, o.a2, o.r);
      Eigen::Matrix2d hd;
      hd << h2.hh, h2.hk, h2.hk, h2.kk;
      hd = hd / prob - gd * gd.transpose();
      OutputMat h = jac.transpose() * hd * jac;
      h(0, 0) -= 1.0 / (om12_ * s1 * s1);
      h(1, 1) -= 1.0 / (om12_ * s2 * s2);
      h(0, 1) += rho12_ / (om12_ * s1 * s2);
      h(1, 0) += rho12_ / (om12_ * s1 * s2);
      *hess = h;
    }
    return value;
  }

 private:
  struct Orthant {
    double a1, a2, r;
    double sg1, sg2;  // +1 when the binary label is 0, -1 when it is 1
  };

  Eigen::Vector2d standardized(const MixedLabel& y, const MarginalMeans& m) const {
    return {(y.y1 - m.m1) / p_.sigma1, (y.y3 - m.m2) / p_.sigma2};
  }

  Orthant orthant(const MixedLabel& y, const MarginalMeans& m) const {
    return orthant_from_z(y, m, standardized(y, m));
  }

  Orthant orthant_from_z(const MixedLabel& y, const MarginalMeans& m,
                         const Eigen::Vector2d& z) const {
    if ((y.y2 != 0 && y.y2 != 1) || (y.y4 != 0 && y.y4 != 1)) {
      throw UsageError("binary labels must be 0 or 1");
    }
    const Eigen::Vector2d mu = a_ * z;
    const double h1 = (-m.q1 - mu[0]) / t1_;
    const double h2 = (-m.q2 - mu[1]) / t2_;
    const double sg1 = y.y2 == 0 ? 1.0 : -1.0;
    const double sg2 = y.y4 == 0 ? 1.0 : -1.0;
    return {sg1 * h1, sg2 * h2, sg1 * sg2 * r_, sg1, sg2};
  }

  CopulaParams p_;
  Eigen::Matrix2d a_;  // Gamma21 * Gamma11^{-1}
  Eigen::Matrix2d v_;  // Gamma22 - Gamma21 Gamma11^{-1} Gamma12
  double t1_ = 1.0, t2_ = 1.0, r_ = 0.0;
  double rho12_ = 0.0, om12_ = 1.0, log_norm_ = 0.0;
};

inline ConditionalLatent conditional_latent(const MixedLabel& y, const MarginalMeans& m,
                                            const CopulaParams& p) {
  return Kernel(p).conditional(y, m);
}

/// P(y2 = a, y4 = b | y1, y3) from the conditional latent law of (u3, u4).
/// Equivalent to the orthant decomposition P(0,0) = Phi2, P(0,1) = Phi(-q1) - Phi2,
/// P(1,0) = Phi(-q2) - Phi2, P(1,1) = 1 - Phi(-q1) - Phi(-q2) + Phi2, evaluated as a
/// single reflected Phi2 to avoid cancellation.
inline double quadrant_prob(int y2, int y4, double q1, double q2, const ConditionalLatent& c) {
  if ((y2 != 0 && y2 != 1) || (y4 != 0 && y4 != 1)) {
    throw UsageError("binary labels must be 0 or 1");
  }
  const double t1 = std::sqrt(c.cov(0, 0));
  const double t2 = std::sqrt(c.cov(1, 1));
  if (!(t1 > 0.0 && t2 > 0.0 && c.cov.determinant() > 0.0)) {
    throw ParameterError("conditional covariance is not positive definite");
  }
  const double r = c.cov(0, 1) / (t1 * t2);
  const double sg1 = y2 == 0 ? 1.0 : -1.0;
  const double sg2 = y4 == 0 ? 1.0 : -1.0;
  const double h1 = (-q1 - c.mean[0]) / t1;
  const double h2 = (-q2 - c.mean[1]) / t2;
  return normals::bvn_cdf(sg1 * h1, sg2 * h2, sg1 * sg2 * r);
}

inline double log_density(const MixedLabel& y, const MarginalMeans& m, const CopulaParams& p) {
  return Kernel(p).log_density(y, m);
}

inline OutputVec grad_log_density(const MixedLabel& y, const MarginalMeans& m,
                                  const CopulaParams& p) {
  return Kernel(p).gradient(y, m);
}

struct LossResult {
  double loss = 0.0;
  std::vector<OutputVec> grads;  // d loss / d outputs, one per sample
};

/// Negative log likelihood summed in sample order, with per-sample output gradients.
inline LossResult copula_loss(std::span<const MixedLabel> labels,
                              std::span<const MarginalMeans> means, const CopulaParams& p) {
  if (labels.empty()) throw UsageError("copula_loss: empty batch");
  if (labels.size() != means.size()) throw UsageError("copula_loss: labels/means size mismatch");
  const Kernel kernel(p);
  LossResult out;
  out.grads.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    OutputVec g;
    out.loss -= kernel.evaluate(labels[i], means[i], &g, nullptr);
    out.grads[i] = -g;
  }
  return out;
}

// ---- serialization ------------------------------------------------------------

inline nlohmann::json to_json(const CopulaParams& p) {
  nlohmann::json j;
  j["sigma1"] = p.sigma1;
  j["sigma2"] = p.sigma2;
  std::vector<double> g(16);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) g[i * 4 + k] = p.gamma(i, k);
  j["gamma"] = g;
  return j;
}

inline CopulaParams params_from_json(const nlohmann::json& j) {
  CopulaParams p;
  try {
    p.sigma1 = j.at("sigma1").get<double>();
    p.sigma2 = j.at("sigma2").get<double>();
    const auto g = j.at("gamma").get<std::vector<double>>();
    if (g.size() != 16) throw ParseError("gamma must hold 16 values", 0);
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) p.gamma(i, k) = g[i * 4 + k];
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("copula params: ") + e.what(), 0);
  }
  return p;
}

inline void write_params(const std::string& path, const CopulaParams& p) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << to_json(p).dump(2) << "\n";
}

inline CopulaParams read_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("copula params: ") + e.what(), e.byte);
  }
  return params_from_json(j);
}

}  // namespace cevit::copula
