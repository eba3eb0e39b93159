#pragma once

// Simulation experiments on the latent model (estimator consistency,
// feasible-vs-MLE distance, relative efficiency) and repeated k-fold
// cross-validation of the bi-channel model.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cevit/copula.hpp"
#include "cevit/error.hpp"
#include "cevit/estimator.hpp"
#include "cevit/fit.hpp"
#include "cevit/metrics.hpp"
#include "cevit/parallel.hpp"
#include "cevit/report.hpp"
#include "cevit/rng.hpp"
#include "cevit/synthgen.hpp"

namespace cevit::experiments {

using report::ExperimentReport;
using report::Json;

// ---------------------------------------------------------------- designs

/// Latent design used by the theory experiments. beta1 = beta3 = e0, so the
/// block correlation c13 reaches Cov(y1, y3). beta2 = e1 and beta4 is
/// parallel to it when c24 != 0, orthogonal (e2) otherwise. The literal
/// rho34 estimate converges to feature_corr * cos(beta2, beta4), so it is
/// consistent when c24 is 0 or equal to feature_corr.
struct Design {
  int d0 = 4;
  double c13 = 0.8;
  double c24 = 0.5;
  double feature_corr = 0.5;
  double sigma_eps = 0.25;  // variance of each continuous-response noise
  double sigma_a = 1.0;     // latent block SD of both continuous responses
  double beta2_scale = 1.0;
  double beta4_scale = 0.8;
  // Nonzero feature mean breaks the sign symmetry that otherwise zeroes the
  // expected cross-information between coefficients and copula parameters.
  double feature_mean = 1.0;
};

inline synthgen::LatentModelSpec design_spec(const Design& d) {
  if (d.d0 < (d.c24 != 0.0 ? 2 : 3)) throw ConfigError("design: d0 too small");
  synthgen::LatentModelSpec s;
  s.d0 = d.d0;
  for (auto& b : s.beta) b = model::Vector::Zero(d.d0);
  s.beta[0](0) = 1.0;
  s.beta[2](0) = 1.0;
  s.beta[1](1) = d.beta2_scale;
  s.beta[3](d.c24 != 0.0 ? 1 : 2) = d.beta4_scale;
  s.block_corr(0, 2) = s.block_corr(2, 0) = d.c13;
  s.block_corr(1, 3) = s.block_corr(3, 1) = d.c24;
  s.sigma_eps = Eigen::Matrix2d::Identity() * d.sigma_eps;
  s.feature_corr = d.feature_corr;
  s.feature_mean = d.feature_mean;
  s.sigma_1a = s.sigma_2a = d.sigma_a;
  synthgen::require_valid(s);
  return s;
}

/// Default for the feasible-vs-MLE experiment. The only first-order link
/// between the estimated copula and the coefficients runs through rho34
/// (continuous-response correlations carry no cross-information for the
/// means), so this design makes that link strong: two features, a strong
/// binary-pair correlation and precise continuous responses whose
/// second-order terms would otherwise dominate at small n.
inline Design mle_equiv_design() {
  Design d;
  d.d0 = 2;
  d.c24 = 0.8;
  d.feature_corr = 0.8;
  d.sigma_a = 0.3;
  d.sigma_eps = 0.02;
  return d;
}

inline Json to_json(const Design& d) {
  return {{"d0", d.d0},           {"c13", d.c13},         {"c24", d.c24},
          {"feature_corr", d.feature_corr}, {"sigma_eps", d.sigma_eps}, {"sigma_a", d.sigma_a},
          {"beta2_scale", d.beta2_scale}, {"beta4_scale", d.beta4_scale}, {"feature_mean", d.feature_mean}};
}

inline Design design_from_json(const Json& j, Design d = {}) {
  try {
    d.d0 = j.value("d0", d.d0);
    d.c13 = j.value("c13", d.c13);
    d.c24 = j.value("c24", d.c24);
    d.feature_corr = j.value("feature_corr", d.feature_corr);
    d.sigma_eps = j.value("sigma_eps", d.sigma_eps);
    d.sigma_a = j.value("sigma_a", d.sigma_a);
    d.beta2_scale = j.value("beta2_scale", d.beta2_scale);
    d.beta4_scale = j.value("beta4_scale", d.beta4_scale);
    d.feature_mean = j.value("feature_mean", d.feature_mean);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("design: ") + e.what());
  }
  return d;
}

/// A "spec" object (full latent spec) wins over a "design" object.
inline synthgen::LatentModelSpec spec_from_config(const Json& cfg, Json& echo,
                                                  const Design& fallback = {}) {
  if (cfg.contains("spec")) {
    const auto s = synthgen::latent_spec_from_json(nlohmann::json::parse(cfg["spec"].dump()));
    synthgen::require_valid(s);
    echo["spec"] = Json::parse(synthgen::to_json(s).dump());
    return s;
  }
  const Design d = design_from_json(cfg.value("design", Json::object()), fallback);
  echo["design"] = to_json(d);
  return design_spec(d);
}

template <class T>
std::vector<T> list_value(const Json& cfg, const char* key, std::vector<T> def) {
  if (!cfg.contains(key)) return def;
  try {
    return cfg[key].get<std::vector<T>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

template <class T>
T scalar_value(const Json& cfg, const char* key, T def) {
  try {
    return cfg.value(key, def);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

inline Json vec_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

// Parameter names in the copula's latent order (y1, y3, y2, y4).
inline const std::vector<std::string>& param_names() {
  static const std::vector<std::string> names{"sigma1", "sigma2", "rho12", "rho13",
                                              "rho14",  "rho23",  "rho24", "rho34"};
  return names;
}

inline std::vector<double> param_vector(const copula::CopulaParams& p) {
  const auto& g = p.gamma;
  return {p.sigma1, p.sigma2, g(0, 1), g(0, 2), g(0, 3), g(1, 2), g(1, 3), g(2, 3)};
}

// ---------------------------------------------------------------- consistency

inline Json summarize_consistency(const ExperimentReport& r) {
  const auto grid = r.config.at("n_grid").get<std::vector<double>>();
  Json s;
  Json per = Json::object();
  for (const auto& name : param_names()) {
    std::vector<double> med;
    for (double n : grid) {
      med.push_back(report::median(report::column(
          r.records, "err_" + name, [&](const Json& x) { return x.at("n").get<double>() == n; })));
    }
    const auto fitl = report::loglog_fit(grid, med);
    bool decreasing = med.size() >= 2 && med.back() < med.front();
    per[name] = {{"median_abs_error", vec_json(med)},
                 {"slope", fitl.slope},
                 {"intercept", fitl.intercept},
                 {"last_below_first", decreasing}};
  }
  s["n_grid"] = vec_json(grid);
  s["parameters"] = per;
  s["records"] = r.records.size();
  return s;
}

/// Replicates of latent-model data with oracle means; the estimator sees the
/// true residuals and latent means, so its error is pure sampling error.
inline ExperimentReport exp_consistency(const Json& cfg, std::uint64_t seed, int threads = 1) {
  report::Stopwatch clock;
  ExperimentReport r;
  r.id = "consistency";
  const auto grid = list_value<int>(cfg, "n_grid", {400, 1600, 6400});
  const int reps = scalar_value(cfg, "replicates", 200);
  const std::string mode = scalar_value<std::string>(cfg, "mode", "empirical");
  if (grid.empty() || reps < 1) throw ConfigError("consistency: empty grid or replicates < 1");
  for (int n : grid)
    if (n < 3) throw ConfigError("consistency: n must be >= 3");
  if (mode != "empirical" && mode != "oracle") throw ConfigError("consistency: mode must be empirical or oracle");
  r.config = {{"n_grid", grid}, {"replicates", reps}, {"mode", mode}, {"seed", seed}};
  const auto spec = spec_from_config(cfg, r.config);
  const auto truth = synthgen::implied_params(spec);
  const auto tv = param_vector(truth);

  const std::size_t tasks = grid.size() * static_cast<std::size_t>(reps);
  r.records.resize(tasks);
  parallel_for(tasks, threads, [&](std::size_t t) {
    const int n = grid[t / reps];
    const int rep = static_cast<int>(t % reps);
    const std::uint64_t s = rng::derive(seed, t);
    copula::CopulaParams est;
    if (mode == "oracle") {
      est = estimator::estimate_oracle(truth).params;
    } else {
      const auto d = synthgen::gen_latent_model(spec, static_cast<std::size_t>(n), s);
      const auto m = synthgen::oracle_means(spec, d.left, d.right);
      est = estimator::estimate_empirical(fit::warmup_outputs(m, d.labels));
    }
    const auto ev = param_vector(est);
    Json rec = {{"n", n}, {"replicate", rep}, {"seed", s}};
    for (std::size_t k = 0; k < ev.size(); ++k) rec["err_" + param_names()[k]] = std::abs(ev[k] - tv[k]);
    r.records[t] = std::move(rec);
  });
  r.summary = summarize_consistency(r);
  r.wall_clock_seconds = clock.seconds();
  return r;
}

// ---------------------------------------------------------------- MLE equivalence

inline Json summarize_mle_equiv(const ExperimentReport& r) {
  const auto grid = r.config.at("n_grid").get<std::vector<double>>();
  std::vector<double> med;
  Json excluded = Json::array();
  for (double n : grid) {
    auto at_n = [&](const Json& x) { return x.at("n").get<double>() == n; };
    med.push_back(report::median(report::column(r.records, "distance", [&](const Json& x) {
      return at_n(x) && x.at("converged").get<bool>();
    })));
    int bad = 0;
    for (const auto& x : r.records) bad += at_n(x) && !x.at("converged").get<bool>();
    excluded.push_back(bad);
  }
  bool strictly = true;
  for (std::size_t i = 1; i < med.size(); ++i) strictly = strictly && med[i] < med[i - 1];
  const auto fitl = report::loglog_fit(grid, med);
  return {{"n_grid", vec_json(grid)},
          {"median_distance", vec_json(med)},
          {"slope", fitl.slope},
          {"intercept", fitl.intercept},
          {"strictly_decreasing", strictly},
          {"non_converged", excluded},
          {"records", r.records.size()}};
}

/// Distance between the feasible estimate (copula loss at estimated
/// parameters) and the MLE (copula loss at the true parameters).
inline ExperimentReport exp_mle_equiv(const Json& cfg, std::uint64_t seed, int threads = 1) {
  report::Stopwatch clock;
  ExperimentReport r;
  r.id = "mle_equiv";
  const auto grid = list_value<int>(cfg, "n_grid", {500, 2000, 8000});
  const int reps = scalar_value(cfg, "replicates", 100);
  const std::string source = scalar_value<std::string>(cfg, "feasible_params", "estimated");
  if (grid.empty() || reps < 1) throw ConfigError("mle_equiv: empty grid or replicates < 1");
  if (source != "estimated" && source != "oracle") {
    throw ConfigError("mle_equiv: feasible_params must be estimated or oracle");
  }
  r.config = {{"n_grid", grid}, {"replicates", reps}, {"feasible_params", source}, {"seed", seed}};
  const auto spec = spec_from_config(cfg, r.config, mle_equiv_design());
  const auto truth = synthgen::implied_params(spec);
  const auto tc = fit::true_coefficients(spec);
  Eigen::VectorXd tstack(4 * spec.d0);
  for (int k = 0; k < 4; ++k) tstack.segment(k * spec.d0, spec.d0) = tc[k];

  const std::size_t tasks = grid.size() * static_cast<std::size_t>(reps);
  r.records.resize(tasks);
  parallel_for(tasks, threads, [&](std::size_t t) {
    const int n = grid[t / reps];
    const int rep = static_cast<int>(t % reps);
    const std::uint64_t s = rng::derive(seed, t);
    const auto d = synthgen::gen_latent_model(spec, static_cast<std::size_t>(n), s);
    const auto mle = fit::fit_linear(d.left, d.right, d.labels, fit::LinearKind::copula_mle, truth);
    const auto fes = source == "oracle"
                         ? fit::fit_linear(d.left, d.right, d.labels, fit::LinearKind::copula_oracle, truth)
                         : fit::fit_linear(d.left, d.right, d.labels, fit::LinearKind::copula_feasible);
    r.records[t] = {{"n", n},
                    {"replicate", rep},
                    {"seed", s},
                    {"distance", (fes.stacked() - mle.stacked()).norm()},
                    {"err_fes", (fes.stacked() - tstack).norm()},
                    {"err_mle", (mle.stacked() - tstack).norm()},
                    {"iter_fes", fes.iterations},
                    {"iter_mle", mle.iterations},
                    {"converged", fes.converged && mle.converged}};
  });
  r.summary = summarize_mle_equiv(r);
  r.wall_clock_seconds = clock.seconds();
  return r;
}

// ---------------------------------------------------------------- efficiency

inline Json summarize_efficiency(const ExperimentReport& r) {
  Json cases = Json::array();
  const int p = r.config.at("num_coefficients").get<int>();
  std::vector<double> ratio_grid;
  for (const auto& c : r.config.at("cases")) {
    const std::string name = c.at("case").get<std::string>();
    auto in_case = [&](const Json& x) {
      return x.at("case").get<std::string>() == name && x.at("converged").get<bool>();
    };
    const auto ols = report::column(r.records, "se_ols", in_case);
    const auto fes = report::column(r.records, "se_fes", in_case);
    std::vector<double> diff(ols.size());
    for (std::size_t i = 0; i < ols.size(); ++i) diff[i] = ols[i] - fes[i];
    const auto test = report::paired_t(diff);
    const double mse_ols = report::mean(ols), mse_fes = report::mean(fes);
    Json vr = Json::array();
    for (int k = 0; k < p; ++k) {
      const double vo = report::sd(report::column(r.records, "b_ols_" + std::to_string(k), in_case));
      const double vf = report::sd(report::column(r.records, "b_fes_" + std::to_string(k), in_case));
      vr.push_back((vf * vf) / (vo * vo));
    }
    int bad = 0;
    for (const auto& x : r.records) {
      bad += x.at("case").get<std::string>() == name && !x.at("converged").get<bool>();
    }
    const double ratio = mse_fes / mse_ols;
    if (c.at("grid").get<bool>()) ratio_grid.push_back(ratio);
    cases.push_back({{"case", name},
                     {"c13", c.at("c13")},
                     {"c24", c.at("c24")},
                     {"replicates_used", ols.size()},
                     {"non_converged", bad},
                     {"mse_ols", mse_ols},
                     {"mse_fes", mse_fes},
                     {"ratio", ratio},
                     {"mean_diff", test.mean_diff},
                     {"t", test.t},
                     {"p_one_sided", test.p_greater},
                     {"p_two_sided", test.p_two_sided},
                     {"variance_ratios", vr}});
  }
  bool mono = true;
  for (std::size_t i = 1; i < ratio_grid.size(); ++i) mono = mono && ratio_grid[i] <= ratio_grid[i - 1];
  return {{"cases", cases}, {"grid_ratio_nonincreasing", mono}, {"records", r.records.size()}};
}

/// Empirical-loss estimate vs feasible copula estimate, squared error to the
/// truth over replicates. Grid over the block correlation c13 plus an
/// independent (Gamma = I) case.
inline ExperimentReport exp_efficiency(const Json& cfg, std::uint64_t seed, int threads = 1) {
  report::Stopwatch clock;
  ExperimentReport r;
  r.id = "efficiency";
  const int n = scalar_value(cfg, "n", 500);
  const int reps = scalar_value(cfg, "replicates", 200);
  const auto grid = list_value<double>(cfg, "c13_grid", {0.0, 0.2, 0.4, 0.6, 0.8});
  const bool with_identity = scalar_value(cfg, "identity_case", true);
  if (n < 10 || reps < 2) throw ConfigError("efficiency: need n >= 10 and replicates >= 2");
  r.config = {{"n", n}, {"replicates", reps}, {"c13_grid", grid}, {"identity_case", with_identity},
              {"seed", seed}};
  const Design base = design_from_json(cfg.value("design", Json::object()));
  r.config["design"] = to_json(base);

  struct Case {
    std::string name;
    Design design;
    bool grid;
  };
  std::vector<Case> cases;
  for (double c : grid) {
    Design d = base;
    d.c13 = c;
    char buf[32];
    std::snprintf(buf, sizeof buf, "c13=%g", c);
    cases.push_back({buf, d, true});
  }
  if (with_identity) {
    Design d = base;
    d.c13 = 0.0;
    d.c24 = 0.0;
    cases.push_back({"identity", d, false});
  }
  std::vector<synthgen::LatentModelSpec> specs;
  Json cj = Json::array();
  for (const auto& c : cases) {
    specs.push_back(design_spec(c.design));
    cj.push_back({{"case", c.name}, {"c13", c.design.c13}, {"c24", c.design.c24}, {"grid", c.grid}});
  }
  r.config["cases"] = cj;
  r.config["num_coefficients"] = 4 * base.d0;

  const std::size_t tasks = cases.size() * static_cast<std::size_t>(reps);
  r.records.resize(tasks);
  parallel_for(tasks, threads, [&](std::size_t t) {
    const std::size_t ci = t / reps;
    const int rep = static_cast<int>(t % reps);
    // Common random numbers: replicate k uses the same stream in every case.
    const std::uint64_t s = rng::derive(seed, static_cast<std::uint64_t>(rep));
    const auto& spec = specs[ci];
    const auto tc = fit::true_coefficients(spec);
    Eigen::VectorXd truth(4 * spec.d0);
    for (int k = 0; k < 4; ++k) truth.segment(k * spec.d0, spec.d0) = tc[k];
    const auto d = synthgen::gen_latent_model(spec, static_cast<std::size_t>(n), s);
    const auto ols = fit::fit_linear(d.left, d.right, d.labels, fit::LinearKind::empirical);
    const auto fes = fit::fit_linear(d.left, d.right, d.labels, fit::LinearKind::copula_feasible);
    const Eigen::VectorXd bo = ols.stacked(), bf = fes.stacked();
    Json rec = {{"case", cases[ci].name},
                {"replicate", rep},
                {"seed", s},
                {"se_ols", (bo - truth).squaredNorm()},
                {"se_fes", (bf - truth).squaredNorm()},
                {"converged", ols.converged && fes.converged}};
    for (Eigen::Index k = 0; k < bo.size(); ++k) rec["b_ols_" + std::to_string(k)] = bo[k];
    for (Eigen::Index k = 0; k < bf.size(); ++k) rec["b_fes_" + std::to_string(k)] = bf[k];
    r.records[t] = std::move(rec);
  });
  r.summary = summarize_efficiency(r);
  r.wall_clock_seconds = clock.seconds();
  return r;
}

// ---------------------------------------------------------------- cross-validation

struct CvOptions {
  int folds = 5;
  int repeats = 4;
  model::ModelSpec model;
  fit::TrainConfig train;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Fold index of every sample for one repeat: a seeded permutation cut into
/// `folds` contiguous chunks whose sizes differ by at most one.
inline std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw UsageError("cv: need at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) throw UsageError("cv: more folds than samples");
  const auto perm = fit::detail::permutation(n, seed);
  std::vector<int> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[perm[i]] = static_cast<int>(i * static_cast<std::size_t>(folds) / n);
  }
  return f;
}

inline fit::TrainData select(const fit::TrainData& all, const std::vector<std::size_t>& idx) {
  fit::TrainData out;
  out.left.resize(all.left.rows(), static_cast<Eigen::Index>(idx.size()));
  out.right.resize(all.right.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.left.col(static_cast<Eigen::Index>(k)) = all.left.col(static_cast<Eigen::Index>(idx[k]));
    out.right.col(static_cast<Eigen::Index>(k)) = all.right.col(static_cast<Eigen::Index>(idx[k]));
    out.labels.push_back(all.labels[idx[k]]);
  }
  return out;
}

inline const std::vector<std::string>& cv_metric_names() {
  static const std::vector<std::string> m{"mse_left", "mse_right", "acc_left",
                                          "acc_right", "auc_left", "auc_right"};
  return m;
}

inline Json metric_record(const metrics::MetricSet& m) {
  Json j;
  j["mse_left"] = m.mse_left;
  j["mse_right"] = m.mse_right;
  j["acc_left"] = m.acc_left;
  j["acc_right"] = m.acc_right;
  j["auc_left"] = m.auc_left_defined ? Json(m.auc_left) : Json(nullptr);
  j["auc_right"] = m.auc_right_defined ? Json(m.auc_right) : Json(nullptr);
  return j;
}

inline Json summarize_cv(const ExperimentReport& r) {
  Json methods = Json::object();
  for (const std::string meth : {"empirical", "copula"}) {
    Json m = Json::object();
    for (const auto& k : cv_metric_names()) {
      m[k] = report::describe(report::column(
          r.records, k, [&](const Json& x) { return x.at("method").get<std::string>() == meth; }));
    }
    methods[meth] = m;
  }
  // Pairwise per fold: lower MSE wins, higher accuracy/AUC wins.
  std::map<std::pair<long, long>, std::pair<const Json*, const Json*>> pairs;
  for (const auto& x : r.records) {
    auto& slot = pairs[{x.at("repeat").get<long>(), x.at("fold").get<long>()}];
    (x.at("method").get<std::string>() == "copula" ? slot.second : slot.first) = &x;
  }
  Json wins = Json::object();
  for (const auto& k : cv_metric_names()) {
    const bool lower_better = k.rfind("mse", 0) == 0;
    int cw = 0, ew = 0, ties = 0;
    for (const auto& [key, pr] : pairs) {
      if (!pr.first || !pr.second) continue;
      const auto& a = pr.first->at(k);
      const auto& b = pr.second->at(k);
      if (!a.is_number() || !b.is_number()) continue;
      const double e = a.get<double>(), c = b.get<double>();
      if (e == c) {
        ++ties;
      } else if ((c < e) == lower_better) {
        ++cw;
      } else {
        ++ew;
      }
    }
    wins[k] = {{"copula", cw}, {"empirical", ew}, {"ties", ties},
               {"sign_test_p", report::sign_test_p(cw, ew)}};
  }
  return {{"methods", methods}, {"win_counts", wins}, {"records", r.records.size()}};
}

inline Json cv_config_json(const CvOptions& o) {
  return {{"folds", o.folds},
          {"repeats", o.repeats},
          {"model", Json::parse(model::to_json(o.model).dump())},
          {"train", Json::parse(fit::to_json(o.train).dump())},
          {"seed", o.seed}};
}

/// Repeated k-fold CV comparing copula-loss training against the
/// empirical-loss baseline on identical folds and seeds. With
/// train.match_epochs off the baseline is the stage-1 model of the same run.
inline ExperimentReport run_cv(const synthgen::Dataset& data, const CvOptions& o) {
  report::Stopwatch clock;
  fit::check_config(o.train);
  model::check_spec(o.model);
  if (o.repeats < 1) throw UsageError("cv: repeats must be >= 1");
  ExperimentReport r;
  r.id = "cv";
  r.config = cv_config_json(o);
  r.config["n"] = data.n();
  const auto all = fit::TrainData::from(data);
  const std::size_t n = all.n();

  std::vector<std::vector<int>> assign;
  for (int rep = 0; rep < o.repeats; ++rep) {
    assign.push_back(fold_assignment(n, o.folds, rng::derive(o.seed, 1000 + rep)));
  }
  const std::size_t tasks = static_cast<std::size_t>(o.repeats * o.folds);
  std::vector<Json> out(2 * tasks);
  parallel_for(tasks, o.threads, [&](std::size_t t) {
    const int rep = static_cast<int>(t) / o.folds;
    const int fold = static_cast<int>(t) % o.folds;
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < n; ++i) (assign[rep][i] == fold ? te : tr).push_back(i);
    const auto train = select(all, tr);
    const auto test = select(all, te);
    fit::TrainConfig cfg = o.train;
    cfg.seed = rng::derive(o.seed, t);

    const auto cop = fit::run_feasible(train, o.model, cfg, fit::LossKind::copula);
    model::BiChannelModel base = cop.model;
    if (cfg.match_epochs) {
      base = fit::run_feasible(train, o.model, cfg, fit::LossKind::empirical).model;
    } else {
      base.params() = cop.stage1_params;
    }
    auto row = [&](const std::string& method, const model::BiChannelModel& m) {
      const auto pred = fit::predict(m, test.left, test.right);
      Json rec = {{"repeat", rep}, {"fold", fold}, {"method", method},
                  {"n_train", tr.size()}, {"n_test", te.size()}};
      rec.update(metric_record(metrics::evaluate(pred, test.labels)));
      return rec;
    };
    out[2 * t] = row("empirical", base);
    Json c = row("copula", cop.model);
    const auto pv = param_vector(cop.params);
    for (std::size_t k = 0; k < pv.size(); ++k) c["est_" + param_names()[k]] = pv[k];
    c["projection_changed"] = cop.diagnostics.projection.changed;
    out[2 * t + 1] = std::move(c);
  });
  r.records = std::move(out);
  r.summary = summarize_cv(r);
  r.wall_clock_seconds = clock.seconds();
  return r;
}

/// Recomputes the summary of any report from its records and config.
inline Json summarize(const ExperimentReport& r) {
  if (r.id == "consistency") return summarize_consistency(r);
  if (r.id == "mle_equiv") return summarize_mle_equiv(r);
  if (r.id == "efficiency") return summarize_efficiency(r);
  if (r.id == "cv") return summarize_cv(r);
  throw UsageError("unknown experiment id '" + r.id + "'");
}

}  // namespace cevit::experiments
