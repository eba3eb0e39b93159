#pragma once

// Losses and training: the empirical loss, mini-batch Adam training of the
// bi-channel model in three stages (warm-up, copula estimation, copula-loss
// fine-tuning), and full-batch fitters for the linear-representation setting.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cevit/copula.hpp"
#include "cevit/error.hpp"
#include "cevit/estimator.hpp"
#include "cevit/model.hpp"
#include "cevit/normals.hpp"
#include "cevit/rng.hpp"
#include "cevit/synthgen.hpp"

namespace cevit::fit {

using copula::LossResult;
using copula::MarginalMeans;
using copula::MixedLabel;
using model::Matrix;
using model::Means;
using model::Vector;

// ---------------------------------------------------------------- losses

/// Weights on the two squared-error terms. With sq = 1/(2 sigma^2) the
/// empirical loss equals the copula loss at Gamma = I up to a constant.
struct EmpiricalWeights {
  double sq1 = 1.0;
  double sq3 = 1.0;
};

/// -log P(y | q) under the probit link, and its first two q-derivatives.
struct ProbitTerm {
  double nll, d1, d2;
};

inline ProbitTerm probit_term(int y, double q) {
  const double sgn = y == 1 ? 1.0 : -1.0;
  const double s = sgn * q;
  const double lam = normals::inverse_mills(s);
  return {-normals::log_std_cdf(s), -sgn * lam, lam * (s + lam)};
}

/// Squared errors for y1, y3 plus probit negative log-likelihood for y2, y4,
/// summed over the batch. Gradients are per sample over (m1, m2, q1, q2).
inline LossResult empirical_loss(std::span<const MixedLabel> labels,
                                 std::span<const MarginalMeans> means,
                                 const EmpiricalWeights& w = {}) {
  if (labels.empty()) throw UsageError("empirical_loss: empty batch");
  if (labels.size() != means.size()) throw UsageError("empirical_loss: labels/means size mismatch");
  LossResult out;
  out.grads.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& y = labels[i];
    const auto& m = means[i];
    if ((y.y2 != 0 && y.y2 != 1) || (y.y4 != 0 && y.y4 != 1)) {
      throw UsageError("binary labels must be 0 or 1");
    }
    const double r1 = y.y1 - m.m1, r3 = y.y3 - m.m2;
    const auto p2 = probit_term(y.y2, m.q1);
    const auto p4 = probit_term(y.y4, m.q2);
    out.loss += w.sq1 * r1 * r1 + w.sq3 * r3 * r3 + p2.nll + p4.nll;
    out.grads[i] = {-2.0 * w.sq1 * r1, -2.0 * w.sq3 * r3, p2.d1, p4.d1};
  }
  return out;
}

inline std::vector<MarginalMeans> to_means(const Means& m) {
  std::vector<MarginalMeans> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[j] = {m(0, j), m(1, j), m(2, j), m(3, j)};
  return out;
}

// ---------------------------------------------------------------- optimizer

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(Eigen::Index n, const AdamConfig& c = {}) : c_(c), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  /// Updates theta[from:] only; earlier entries are left bit-identical.
  void step(Vector& theta, const Vector& grad, double lr, Eigen::Index from = 0) {
    ++t_;
    const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
    for (Eigen::Index i = from; i < theta.size(); ++i) {
      m_[i] = c_.beta1 * m_[i] + (1.0 - c_.beta1) * grad[i];
      v_[i] = c_.beta2 * v_[i] + (1.0 - c_.beta2) * grad[i] * grad[i];
      theta[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + c_.eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig c_;
  Vector m_, v_;
  long t_ = 0;
};

inline double step_lr(double lr0, double decay, int every, int epoch) {
  return lr0 * std::pow(decay, static_cast<double>(epoch / every));
}

// ---------------------------------------------------------------- training

struct TrainConfig {
  int epochs_per_stage = 50;
  int batch_size = 128;
  double lr_stage1 = 1e-3;
  double lr_stage3 = 1e-4;
  double lr_decay = 0.9;
  int decay_every_stage1 = 4;
  int decay_every_stage3 = 2;
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool freeze_encoder_stage3 = false;
  bool warm_start_stage3 = true;
  /// Empirical-loss runs continue into a third stage with the stage-3
  /// schedule, so both losses see the same number of updates. Off: the
  /// empirical baseline is stage 1 alone.
  bool match_epochs = false;
};

inline void check_config(const TrainConfig& c) {
  if (c.epochs_per_stage < 1 || c.batch_size < 1 || c.decay_every_stage1 < 1 ||
      c.decay_every_stage3 < 1) {
    throw ConfigError("train config: counts must be positive");
  }
  for (double r : {c.lr_stage1, c.lr_stage3, c.lr_decay}) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("train config: rates must be in (0, 1]");
  }
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0 && c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0 &&
        c.adam.eps > 0.0)) {
    throw ConfigError("train config: bad Adam constants");
  }
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs_per_stage", c.epochs_per_stage},
          {"batch_size", c.batch_size},
          {"lr_stage1", c.lr_stage1},
          {"lr_stage3", c.lr_stage3},
          {"lr_decay", c.lr_decay},
          {"decay_every_stage1", c.decay_every_stage1},
          {"decay_every_stage3", c.decay_every_stage3},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"seed", c.seed},
          {"freeze_encoder_stage3", c.freeze_encoder_stage3},
          {"warm_start_stage3", c.warm_start_stage3},
          {"match_epochs", c.match_epochs}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  try {
    c.epochs_per_stage = j.value("epochs_per_stage", c.epochs_per_stage);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_stage1 = j.value("lr_stage1", c.lr_stage1);
    c.lr_stage3 = j.value("lr_stage3", c.lr_stage3);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.decay_every_stage1 = j.value("decay_every_stage1", c.decay_every_stage1);
    c.decay_every_stage3 = j.value("decay_every_stage3", c.decay_every_stage3);
    if (j.contains("adam")) {
      c.adam.beta1 = j["adam"].value("beta1", c.adam.beta1);
      c.adam.beta2 = j["adam"].value("beta2", c.adam.beta2);
      c.adam.eps = j["adam"].value("eps", c.adam.eps);
    }
    c.seed = j.value("seed", c.seed);
    c.freeze_encoder_stage3 = j.value("freeze_encoder_stage3", c.freeze_encoder_stage3);
    c.warm_start_stage3 = j.value("warm_start_stage3", c.warm_start_stage3);
    c.match_epochs = j.value("match_epochs", c.match_epochs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  check_config(c);
  return c;
}

struct TraceRow {
  int stage = 1;
  int epoch = 0;
  double loss = 0.0;  // mean per-sample loss over the epoch
  double lr = 0.0;
};

inline std::string trace_csv(const std::vector<TraceRow>& t) {
  std::string out = "epoch,stage,loss,lr\n";
  char buf[128];
  for (const auto& r : t) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g\n", r.epoch, r.stage, r.loss, r.lr);
    out += buf;
  }
  return out;
}

/// Non-finite loss during training. Carries the trace up to the failure.
class DivergenceError : public TrainingError {
 public:
  DivergenceError(const std::string& w, std::vector<TraceRow> trace)
      : TrainingError(w), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

enum class LossKind { empirical, copula };

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "empirical") return LossKind::empirical;
  if (s == "copula") return LossKind::copula;
  throw UsageError("unknown loss '" + s + "' (expected empirical or copula)");
}

/// Where stage 2 gets the copula parameters.
struct CopulaSource {
  enum class Kind { empirical, oracle, fixed } kind = Kind::empirical;
  std::optional<copula::CopulaParams> params;  // for oracle (filled from data) and fixed

  static CopulaSource empirical() { return {}; }
  static CopulaSource fixed(const copula::CopulaParams& p) { return {Kind::fixed, p}; }
  static CopulaSource oracle() { return {Kind::oracle, std::nullopt}; }
};

struct FeasibleResult {
  model::BiChannelModel model;
  Vector stage1_params;
  copula::CopulaParams params;
  estimator::Diagnostics diagnostics;
  std::vector<TraceRow> trace;
};

/// Model-ready view of a dataset: inputs materialized once.
struct TrainData {
  Matrix left, right;
  std::vector<MixedLabel> labels;

  static TrainData from(const synthgen::Dataset& d) { return {d.input(0), d.input(1), d.labels}; }
  std::size_t n() const { return labels.size(); }
};

inline Means predict(const model::BiChannelModel& m, const Matrix& left, const Matrix& right,
                     Eigen::Index chunk = 1024) {
  Means out(4, left.cols());
  for (Eigen::Index s = 0; s < left.cols(); s += chunk) {
    const Eigen::Index len = std::min(chunk, left.cols() - s);
    out.middleCols(s, len) = m.predict(left.middleCols(s, len), right.middleCols(s, len));
  }
  return out;
}

namespace detail {

inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  auto eng = rng::stream(seed, 0);
  // Fisher-Yates with an explicit modulo-free draw, so the order is the same
  // on every standard library.
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = eng(); while (r >= limit);
    std::swap(p[i - 1], p[r % bound]);
  }
  return p;
}

/// One stage of mini-batch training. Losses are averaged over each batch.
inline void train_stage(model::BiChannelModel& m, const TrainData& data, const TrainConfig& cfg,
                        int stage, double lr0, int every, LossKind loss,
                        const std::optional<copula::CopulaParams>& params,
                        std::vector<TraceRow>& trace) {
  const std::size_t n = data.n();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  Adam opt(m.num_params(), cfg.adam);
  const Eigen::Index from = m.frozen() ? m.encoder_size() : 0;
  std::optional<copula::Kernel> kernel;
  if (loss == LossKind::copula) kernel.emplace(*params);
  for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    const double lr = step_lr(lr0, cfg.lr_decay, every, epoch);
    const auto perm = permutation(n, rng::derive(cfg.seed, 1000003ULL * stage + epoch));
    double total = 0.0;
    for (std::size_t s = 0; s < n; s += bs) {
      const std::size_t len = std::min(bs, n - s);
      Matrix xl(data.left.rows(), static_cast<Eigen::Index>(len));
      Matrix xr(data.right.rows(), static_cast<Eigen::Index>(len));
      std::vector<MixedLabel> y(len);
      for (std::size_t k = 0; k < len; ++k) {
        const auto i = static_cast<Eigen::Index>(perm[s + k]);
        xl.col(static_cast<Eigen::Index>(k)) = data.left.col(i);
        xr.col(static_cast<Eigen::Index>(k)) = data.right.col(i);
        y[k] = data.labels[perm[s + k]];
      }
      const Means out = m.forward(xl, xr);
      const auto means = to_means(out);
      LossResult lr_;
      if (loss == LossKind::empirical) {
        lr_ = empirical_loss(y, means);
      } else {
        lr_.grads.resize(len);
        for (std::size_t k = 0; k < len; ++k) {
          copula::OutputVec g;
          lr_.loss -= kernel->evaluate(y[k], means[k], &g, nullptr);
          lr_.grads[k] = -g;
        }
      }
      if (!std::isfinite(lr_.loss)) {
        trace.push_back({stage, epoch, lr_.loss, lr});
        throw DivergenceError("training diverged in stage " + std::to_string(stage) +
                                  ", epoch " + std::to_string(epoch),
                              trace);
      }
      total += lr_.loss;
      Means up(4, static_cast<Eigen::Index>(len));
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t k = 0; k < len; ++k) up.col(static_cast<Eigen::Index>(k)) = lr_.grads[k] * inv;
      const Vector g = m.backward(up);
      opt.step(m.params(), g, lr, from);
    }
    m.clear_tape();
    trace.push_back({stage, epoch, total / static_cast<double>(n), lr});
  }
}

}  // namespace detail

/// Stage-1 residuals and fitted latent means, the estimator's inputs.
inline estimator::WarmupOutputs warmup_outputs(const Means& pred,
                                               std::span<const MixedLabel> labels) {
  estimator::WarmupOutputs w;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    w.e1.push_back(labels[i].y1 - pred(0, j));
    w.e2.push_back(labels[i].y3 - pred(1, j));
    w.qhat1.push_back(pred(2, j));
    w.qhat2.push_back(pred(3, j));
  }
  return w;
}

/// Three-stage training. With loss = empirical only stage 1 runs (plus the
/// matched continuation when cfg.match_epochs is set).
inline FeasibleResult run_feasible(const TrainData& data, const model::ModelSpec& spec,
                                   const TrainConfig& cfg, LossKind loss = LossKind::copula,
                                   const CopulaSource& source = CopulaSource::empirical()) {
  check_config(cfg);
  if (data.n() == 0) throw UsageError("run_feasible: empty dataset");
  FeasibleResult r{model::BiChannelModel(spec, rng::derive(cfg.seed, 7)), {}, {}, {}, {}};
  detail::train_stage(r.model, data, cfg, 1, cfg.lr_stage1, cfg.decay_every_stage1,
                      LossKind::empirical, std::nullopt, r.trace);
  r.stage1_params = r.model.params();

  if (loss == LossKind::empirical) {
    if (cfg.match_epochs) {
      if (cfg.freeze_encoder_stage3) r.model.freeze_encoder(true);
      detail::train_stage(r.model, data, cfg, 3, cfg.lr_stage3, cfg.decay_every_stage3,
                          LossKind::empirical, std::nullopt, r.trace);
      r.model.freeze_encoder(false);
    }
    r.params = copula::CopulaParams::independent();
    return r;
  }

  // Stage 2.
  switch (source.kind) {
    case CopulaSource::Kind::empirical: {
      const Means pred = predict(r.model, data.left, data.right);
      auto est = estimator::estimate_empirical_full(warmup_outputs(pred, data.labels));
      r.params = est.params;
      r.diagnostics = est.diagnostics;
      break;
    }
    case CopulaSource::Kind::oracle:
    case CopulaSource::Kind::fixed: {
      if (!source.params) throw UsageError("run_feasible: oracle copula needs parameters");
      auto est = estimator::estimate_oracle(*source.params);
      r.params = est.params;
      r.diagnostics = est.diagnostics;
      break;
    }
  }

  // Stage 3.
  if (!cfg.warm_start_stage3) {
    r.model = model::BiChannelModel(spec, rng::derive(cfg.seed, 7));
  }
  if (cfg.freeze_encoder_stage3) r.model.freeze_encoder(true);
  detail::train_stage(r.model, data, cfg, 3, cfg.lr_stage3, cfg.decay_every_stage3,
                      LossKind::copula, r.params, r.trace);
  r.model.freeze_encoder(false);
  return r;
}

// ---------------------------------------------------------------- linear fits

enum class LinearKind { empirical, copula_oracle, copula_feasible, copula_mle };

inline std::string to_string(LinearKind k) {
  switch (k) {
    case LinearKind::empirical: return "empirical";
    case LinearKind::copula_oracle: return "copula-oracle";
    case LinearKind::copula_feasible: return "copula-feasible";
    case LinearKind::copula_mle: return "copula-mle";
  }
  return "?";
}

struct LinearOptions {
  int max_iter = 500;
  double grad_tol = 1e-8;
};

/// Coefficients of the mean model: m1 = c1'h1, q1 = c2'h1, m2 = c3'h2, q2 = c4'h2.
struct LinearFit {
  std::array<Vector, 4> coef;
  copula::CopulaParams params;  // parameters used by the copula objective
  estimator::Diagnostics diagnostics;
  double objective = 0.0;
  double grad_max = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_path;

  Vector stacked() const {
    Vector v(coef[0].size() * 4);
    for (int k = 0; k < 4; ++k) v.segment(k * coef[0].size(), coef[0].size()) = coef[k];
    return v;
  }
};

namespace detail {

inline void check_rank(const Matrix& x, const char* which) {
  // x is d x n; the design is its transpose.
  Eigen::ColPivHouseholderQR<Matrix> qr(x.transpose());
  qr.setThreshold(1e-10);
  if (qr.rank() < x.rows()) {
    throw EstimationError(std::string("fit_linear: rank-deficient features (") + which + ")");
  }
}

inline Vector least_squares(const Matrix& x, const std::vector<double>& y) {
  const Eigen::Map<const Vector> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  return x.transpose().colPivHouseholderQr().solve(yv);
}

/// Probit maximum likelihood by damped Newton. Returns the coefficient and
/// whether the gradient tolerance was met.
inline std::pair<Vector, bool> probit_mle(const Matrix& x, const std::vector<int>& y,
                                          const LinearOptions& opt, int* iters) {
  const Eigen::Index d = x.rows();
  Vector b = Vector::Zero(d);
  auto eval = [&](const Vector& beta, Vector* g, Matrix* h) {
    double f = 0.0;
    if (g) g->setZero(d);
    if (h) h->setZero(d, d);
    const Vector q = x.transpose() * beta;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const auto t = probit_term(y[static_cast<std::size_t>(i)], q[i]);
      f += t.nll;
      if (g) *g += t.d1 * x.col(i);
      if (h) h->selfadjointView<Eigen::Lower>().rankUpdate(x.col(i), t.d2);
    }
    if (h) *h = h->selfadjointView<Eigen::Lower>();
    return f;
  };
  Vector g;
  Matrix h;
  double f = eval(b, &g, &h);
  for (int it = 0; it < opt.max_iter; ++it) {
    if (g.cwiseAbs().maxCoeff() <= opt.grad_tol) {
      *iters = it;
      return {b, true};
    }
    const Vector step = h.ldlt().solve(-g);
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const Vector cand = b + t * step;
      const double fc = eval(cand, nullptr, nullptr);
      const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(f);
      if (fc <= f + 1e-4 * t * g.dot(step) || (ls == 0 && fc <= f + roundoff)) {
        b = cand;
        moved = true;
        break;
      }
    }
    if (!moved) {
      *iters = it;
      return {b, g.cwiseAbs().maxCoeff() <= opt.grad_tol};
    }
    f = eval(b, &g, &h);
  }
  *iters = opt.max_iter;
  return {b, g.cwiseAbs().maxCoeff() <= opt.grad_tol};
}

}  // namespace detail

/// Per-equation least squares and probit MLE: the empirical-loss estimator.
inline LinearFit fit_linear_empirical(const Matrix& left, const Matrix& right,
                                      std::span<const MixedLabel> labels,
                                      const LinearOptions& opt = {}) {
  if (labels.empty()) throw UsageError("fit_linear: empty data");
  if (left.cols() != static_cast<Eigen::Index>(labels.size()) || right.cols() != left.cols() ||
      right.rows() != left.rows()) {
    throw UsageError("fit_linear: feature/label shape mismatch");
  }
  detail::check_rank(left, "left");
  detail::check_rank(right, "right");
  std::vector<double> y1, y3;
  std::vector<int> y2, y4;
  for (const auto& y : labels) {
    y1.push_back(y.y1);
    y2.push_back(y.y2);
    y3.push_back(y.y3);
    y4.push_back(y.y4);
  }
  LinearFit out;
  out.coef[0] = detail::least_squares(left, y1);
  out.coef[2] = detail::least_squares(right, y3);
  int i2 = 0, i4 = 0;
  auto [c2, ok2] = detail::probit_mle(left, y2, opt, &i2);
  auto [c4, ok4] = detail::probit_mle(right, y4, opt, &i4);
  out.coef[1] = std::move(c2);
  out.coef[3] = std::move(c4);
  out.converged = ok2 && ok4;
  out.iterations = std::max(i2, i4);
  out.params = copula::CopulaParams::independent();
  return out;
}

/// Copula negative log-likelihood of a linear mean model, with gradient and
/// Hessian over the stacked coefficients (c1, c2, c3, c4).
inline double linear_copula_objective(const copula::Kernel& kernel, const Matrix& left,
                                      const Matrix& right, std::span<const MixedLabel> labels,
                                      const std::array<Vector, 4>& c, Vector* grad, Matrix* hess) {
  const Eigen::Index d = left.rows();
  const Vector m1 = left.transpose() * c[0];
  const Vector q1 = left.transpose() * c[1];
  const Vector m2 = right.transpose() * c[2];
  const Vector q2 = right.transpose() * c[3];
  if (grad) grad->setZero(4 * d);
  if (hess) hess->setZero(4 * d, 4 * d);
  // Output index -> coefficient block and feature side.
  constexpr int block_of[4] = {0, 2, 1, 3};  // (m1, m2, q1, q2) -> (c1, c3, c2, c4)
  double f = 0.0;
  copula::OutputVec g;
  copula::OutputMat h;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    const MarginalMeans mm{m1[j], m2[j], q1[j], q2[j]};
    f -= kernel.evaluate(labels[i], mm, grad ? &g : nullptr, hess ? &h : nullptr);
    if (!grad && !hess) continue;
    const auto hl = left.col(j);
    const auto hr = right.col(j);
    auto feat = [&](int out) { return (out == 0 || out == 2) ? hl : hr; };
    for (int a = 0; a < 4; ++a) {
      if (grad) grad->segment(block_of[a] * d, d) -= g[a] * feat(a);
      if (!hess) continue;
      for (int b = 0; b <= a; ++b) {
        hess->block(block_of[a] * d, block_of[b] * d, d, d).noalias() -=
            h(a, b) * feat(a) * feat(b).transpose();
      }
    }
  }
  if (hess) {
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < a; ++b) {
        hess->block(block_of[b] * d, block_of[a] * d, d, d) =
            hess->block(block_of[a] * d, block_of[b] * d, d, d).transpose();
      }
    }
  }
  return f;
}

/// Newton minimization of the copula loss from a starting fit. The line search
/// only accepts steps that do not increase the objective beyond roundoff.
inline LinearFit minimize_copula_loss(const Matrix& left, const Matrix& right,
                                      std::span<const MixedLabel> labels,
                                      const copula::CopulaParams& params, LinearFit start,
                                      const LinearOptions& opt = {}) {
  const copula::Kernel kernel(params);
  const Eigen::Index d = left.rows();
  auto unstack = [&](const Vector& v) {
    std::array<Vector, 4> c;
    for (int k = 0; k < 4; ++k) c[k] = v.segment(k * d, d);
    return c;
  };
  LinearFit out = std::move(start);
  out.params = params;
  out.objective_path.clear();
  Vector theta = out.stacked();
  Vector g;
  Matrix h;
  double f = linear_copula_objective(kernel, left, right, labels, unstack(theta), &g, &h);
  out.objective_path.push_back(f);
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (!std::isfinite(f)) throw TrainingError("fit_linear: non-finite copula objective");
    if (g.cwiseAbs().maxCoeff() <= opt.grad_tol) break;
    // Newton direction; shift the Hessian until it is positive definite.
    Vector step;
    double shift = 0.0;
    for (int k = 0; k < 60; ++k) {
      Eigen::LLT<Matrix> llt(h + shift * Matrix::Identity(4 * d, 4 * d));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(-g);
        break;
      }
      shift = shift == 0.0 ? 1e-8 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff()) : shift * 10;
    }
    if (step.size() == 0) step = -g;
    const double slope = g.dot(step);
    const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(f);
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const Vector cand = theta + t * step;
      const double fc = linear_copula_objective(kernel, left, right, labels, unstack(cand),
                                                nullptr, nullptr);
      if (std::isfinite(fc) && (fc <= f + 1e-4 * t * slope || (ls == 0 && fc <= f + roundoff))) {
        theta = cand;
        moved = true;
        break;
      }
    }
    if (!moved) break;
    f = linear_copula_objective(kernel, left, right, labels, unstack(theta), &g, &h);
    out.objective_path.push_back(f);
  }
  out.coef = unstack(theta);
  out.objective = f;
  out.grad_max = g.cwiseAbs().maxCoeff();
  out.iterations = it;
  out.converged = out.grad_max <= opt.grad_tol;
  return out;
}

/// Linear-representation fitter. `params` is required for copula_oracle and
/// copula_mle (the true parameters); copula_feasible estimates them from the
/// empirical fit's residuals.
inline LinearFit fit_linear(const Matrix& left, const Matrix& right,
                            std::span<const MixedLabel> labels, LinearKind kind,
                            const std::optional<copula::CopulaParams>& params = std::nullopt,
                            const LinearOptions& opt = {}) {
  LinearFit emp = fit_linear_empirical(left, right, labels, opt);
  if (kind == LinearKind::empirical) return emp;
  if (kind == LinearKind::copula_feasible) {
    Means pred(4, left.cols());
    pred.row(0) = emp.coef[0].transpose() * left;
    pred.row(1) = emp.coef[2].transpose() * right;
    pred.row(2) = emp.coef[1].transpose() * left;
    pred.row(3) = emp.coef[3].transpose() * right;
    auto est = estimator::estimate_empirical_full(warmup_outputs(pred, labels));
    auto fit = minimize_copula_loss(left, right, labels, est.params, emp, opt);
    fit.diagnostics = est.diagnostics;
    return fit;
  }
  if (!params) throw UsageError("fit_linear: " + to_string(kind) + " needs copula parameters");
  return minimize_copula_loss(left, right, labels, *params, emp, opt);
}

/// Ground-truth mean-model coefficients of a latent-model spec, in the same
/// layout as LinearFit::coef.
inline std::array<Vector, 4> true_coefficients(const synthgen::LatentModelSpec& s) {
  const Eigen::Matrix4d cov = synthgen::response_latent_cov(s);
  return {s.beta[0], -s.beta[1] / std::sqrt(cov(1, 1)), s.beta[2], -s.beta[3] / std::sqrt(cov(3, 3))};
}

}  // namespace cevit::fit
