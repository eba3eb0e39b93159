#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "cevit/experiments.hpp"
#include "cevit/plot.hpp"

using namespace cevit;
using report::Json;

namespace {

// Pair-counting AUC: P(score+ > score-) + 0.5 P(tie).
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return num / den;
}

double binom_two_sided(int w, int l) {
  const int n = w + l, k = std::min(w, l);
  double tail = 0.0;
  for (int i = 0; i <= k; ++i) tail += std::tgamma(n + 1.0) / (std::tgamma(i + 1.0) * std::tgamma(n - i + 1.0));
  return std::min(1.0, 2.0 * tail / std::pow(2.0, n));
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cevit_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

model::ModelSpec linear_model(int d) {
  model::ModelSpec m;
  m.encoder.kind = model::EncoderKind::linear;
  m.encoder.input_dim = d;
  m.encoder.output_dim = d;
  return m;
}

fit::TrainConfig quick_train(int epochs = 4) {
  fit::TrainConfig t;
  t.epochs_per_stage = epochs;
  t.batch_size = 64;
  t.lr_stage1 = 1e-2;
  t.lr_stage3 = 1e-3;
  return t;
}

// Summary recomputed from the records of a report read back from disk.
void expect_summary_reproducible(const report::ExperimentReport& r, const std::string& name) {
  const auto dir = temp_dir(name);
  report::write_report(dir, r);
  const auto back = report::read_report(dir / "report.json");
  EXPECT_EQ(back.records.size(), r.records.size());
  EXPECT_EQ(experiments::summarize(back).dump(), r.summary.dump());
  EXPECT_EQ(report::records_csv(back.records), report::records_csv(r.records));
}

}  // namespace

// ---------------------------------------------------------------- metrics

TEST(Auc, SmallExampleAndSingleClass) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(*metrics::auc(s, y), 0.75);
  const std::vector<int> ones{1, 1, 1, 1};
  EXPECT_FALSE(metrics::auc(s, ones).has_value());
  const std::vector<double> tied{0.5, 0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(*metrics::auc(tied, y), 0.5);
  EXPECT_THROW(metrics::auc(s, std::vector<int>{0, 1}), UsageError);
}

TEST(Auc, MatchesPairCountingWithTies) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(rng() % 199);
    std::uniform_int_distribution<int> level(0, 9);  // coarse scores force ties
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) * 0.1;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(*metrics::auc(s, y), brute_auc(s, y), 1e-12);
  }
}

TEST(Metrics, ThresholdAtZeroAndUndefinedAuc) {
  const std::vector<double> q{0.0, -1e-9, 2.0};
  EXPECT_DOUBLE_EQ(metrics::accuracy(q, std::vector<int>{1, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(metrics::mse(std::vector<double>{1, 2}, std::vector<double>{0, 0}), 2.5);
  EXPECT_THROW(metrics::mse(std::vector<double>{}, std::vector<double>{}), UsageError);

  Eigen::Matrix<double, 4, Eigen::Dynamic> pred(4, 3);
  pred << 1, 2, 3, 0, 0, 0, 1, -1, 1, 0.5, 0.5, 0.5;
  std::vector<copula::MixedLabel> y{{1, 1, 0, 1}, {2, 0, 0, 1}, {3, 1, 0, 1}};
  const auto m = metrics::evaluate(pred, y);
  EXPECT_EQ(m.mse_left, 0.0);
  EXPECT_TRUE(m.auc_left_defined);
  EXPECT_DOUBLE_EQ(m.auc_left, 1.0);
  EXPECT_FALSE(m.auc_right_defined);
  EXPECT_TRUE(std::isnan(m.auc_right));
  const auto rec = experiments::metric_record(m);
  EXPECT_TRUE(rec.at("auc_right").is_null());
  EXPECT_THROW(metrics::evaluate(pred.leftCols(2), y), UsageError);
}

// ---------------------------------------------------------------- statistics

TEST(Statistics, PairedTAgainstCauchyTail) {
  // Two differences: one degree of freedom, t = 2.
  const std::vector<double> d{1.0, 3.0};
  const auto t = report::paired_t(d);
  EXPECT_NEAR(t.t, 2.0, 1e-14);
  EXPECT_NEAR(t.p_greater, 0.5 - std::atan(2.0) / std::numbers::pi, 1e-12);
  EXPECT_NEAR(t.p_two_sided, 2.0 * t.p_greater, 1e-12);
  EXPECT_TRUE(std::isnan(report::paired_t(std::vector<double>{1.0, 1.0}).t));
}

TEST(Statistics, SignTestMatchesBinomialSum) {
  EXPECT_NEAR(report::sign_test_p(2, 8), 0.109375, 1e-14);
  EXPECT_EQ(report::sign_test_p(0, 0), 1.0);
  for (int n = 1; n <= 20; ++n)
    for (int w = 0; w <= n; ++w) EXPECT_NEAR(report::sign_test_p(w, n - w), binom_two_sided(w, n - w), 1e-12);
}

TEST(Statistics, LogLogFitRecoversPowerLaw) {
  const std::vector<double> x{400, 1600, 6400};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 / std::sqrt(v));
  const auto f = report::loglog_fit(x, y);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_TRUE(std::isnan(report::loglog_fit(std::vector<double>{1}, std::vector<double>{1}).slope));
  EXPECT_EQ(report::median({3, 1, 2, 10}), 2.5);
}

TEST(Records, CsvUnionOfKeysAndExactNumbers) {
  std::vector<Json> recs{{{"a", 1}, {"b", 0.1}}, {{"a", 2}, {"c", true}, {"b", nullptr}}};
  EXPECT_EQ(report::records_csv(recs), "a,b,c\n1,0.10000000000000001,\n2,,1\n");
  EXPECT_EQ(std::stod(report::format_value(Json(1.0 / 3.0))), 1.0 / 3.0);
}

// ---------------------------------------------------------------- folds

TEST(Folds, PartitionBalancedAndSeeded) {
  for (std::size_t n : {5u, 17u, 100u, 2000u}) {
    const auto f = experiments::fold_assignment(n, 5, 3);
    std::vector<int> size(5, 0);
    for (int k : f) {
      ASSERT_GE(k, 0);
      ASSERT_LT(k, 5);
      ++size[k];
    }
    EXPECT_LE(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()), 1);
    EXPECT_EQ(f, experiments::fold_assignment(n, 5, 3));
  }
  EXPECT_NE(experiments::fold_assignment(100, 5, 3), experiments::fold_assignment(100, 5, 4));
  EXPECT_THROW(experiments::fold_assignment(10, 1, 0), UsageError);
  EXPECT_THROW(experiments::fold_assignment(3, 5, 0), UsageError);
}

// ---------------------------------------------------------------- experiments

TEST(Experiments, ConsistencySummaryFromRecords) {
  const Json cfg = {{"n_grid", {100, 400}}, {"replicates", 6}};
  const auto r = experiments::exp_consistency(cfg, 5);
  ASSERT_EQ(r.records.size(), 12u);
  expect_summary_reproducible(r, "consistency");
  // Oracle mode: the estimate is the truth, every error is zero.
  const auto o = experiments::exp_consistency({{"n_grid", {50}}, {"replicates", 2}, {"mode", "oracle"}}, 5);
  for (const auto& rec : o.records) EXPECT_EQ(rec.at("err_rho13").get<double>(), 0.0);
  EXPECT_THROW(experiments::exp_consistency({{"mode", "bogus"}}, 1), ConfigError);
}

TEST(Experiments, RecordsIndependentOfThreadCount) {
  const Json cfg = {{"n", 80}, {"replicates", 4}, {"c13_grid", {0.0, 0.8}}};
  const auto a = experiments::exp_efficiency(cfg, 9, 1);
  const auto b = experiments::exp_efficiency(cfg, 9, 3);
  EXPECT_EQ(report::records_csv(a.records), report::records_csv(b.records));
  expect_summary_reproducible(a, "efficiency");
  EXPECT_EQ(a.summary.at("cases").size(), 3u);
}

TEST(Experiments, EfficiencyUsesCommonRandomNumbers) {
  const auto r = experiments::exp_efficiency({{"n", 60}, {"replicates", 3}, {"c13_grid", {0.0, 0.5}}}, 4);
  std::map<int, std::set<std::uint64_t>> seeds;
  for (const auto& rec : r.records) seeds[rec.at("replicate").get<int>()].insert(rec.at("seed").get<std::uint64_t>());
  for (const auto& [rep, s] : seeds) EXPECT_EQ(s.size(), 1u) << rep;
}

TEST(Experiments, MleEquivSummaryFromRecords) {
  const auto r = experiments::exp_mle_equiv({{"n_grid", {200, 400}}, {"replicates", 3}}, 2);
  ASSERT_EQ(r.records.size(), 6u);
  for (const auto& rec : r.records) EXPECT_TRUE(rec.at("converged").get<bool>());
  expect_summary_reproducible(r, "mle_equiv");
  // Copula parameters known exactly: feasible and MLE coincide.
  const auto o = experiments::exp_mle_equiv(
      {{"n_grid", {200}}, {"replicates", 2}, {"feasible_params", "oracle"}}, 2);
  for (const auto& rec : o.records) EXPECT_EQ(rec.at("distance").get<double>(), 0.0);
}

TEST(Experiments, CvPairsMethodsOnSameFolds) {
  experiments::Design d;
  d.d0 = 3;
  const auto ds = synthgen::gen_latent_model(experiments::design_spec(d), 120, 6);
  experiments::CvOptions o;
  o.folds = 3;
  o.repeats = 2;
  o.model = linear_model(3);
  o.train = quick_train(2);
  o.seed = 8;
  const auto r = experiments::run_cv(ds, o);
  ASSERT_EQ(r.records.size(), 12u);
  for (std::size_t i = 0; i < r.records.size(); i += 2) {
    EXPECT_EQ(r.records[i].at("method"), "empirical");
    EXPECT_EQ(r.records[i + 1].at("method"), "copula");
    EXPECT_EQ(r.records[i].at("fold"), r.records[i + 1].at("fold"));
    EXPECT_EQ(r.records[i].at("n_test"), r.records[i + 1].at("n_test"));
  }
  int total_test = 0;
  for (const auto& rec : r.records)
    if (rec.at("method") == "copula" && rec.at("repeat") == 0) total_test += rec.at("n_test").get<int>();
  EXPECT_EQ(total_test, 120);
  expect_summary_reproducible(r, "cv");
  o.threads = 2;
  EXPECT_EQ(report::records_csv(experiments::run_cv(ds, o).records), report::records_csv(r.records));
}

// Under Gamma = I with sigma^2 = 1/2 the copula loss is the empirical loss
// plus a constant, so neither should win systematically across folds.
TEST(Experiments, CvNullEquivalenceAtIdentityCopula) {
  experiments::Design d;
  d.d0 = 3;
  d.c13 = 0.0;
  d.c24 = 0.0;
  d.sigma_a = 0.5;
  d.sigma_eps = 0.25;
  const auto ds = synthgen::gen_latent_model(experiments::design_spec(d), 600, 12);
  experiments::CvOptions o;
  o.folds = 5;
  o.repeats = 4;
  o.model = linear_model(3);
  o.train = quick_train(6);
  o.train.match_epochs = true;
  o.seed = 13;
  const auto r = experiments::run_cv(ds, o);
  for (const auto& k : experiments::cv_metric_names()) {
    const auto& w = r.summary.at("win_counts").at(k);
    EXPECT_GT(w.at("sign_test_p").get<double>(), 0.01) << k << " " << w.dump();
  }
}

TEST(Experiments, UnknownIdRejected) {
  report::ExperimentReport r;
  r.id = "nope";
  EXPECT_THROW(experiments::summarize(r), UsageError);
  r.records.push_back({{"x", 1}});
  EXPECT_THROW(plot::emit_plots(r, temp_dir("nope")), UsageError);
}

// ---------------------------------------------------------------- plots

TEST(Plot, EmptyReportIsDataError) {
  report::ExperimentReport r;
  r.id = "consistency";
  EXPECT_THROW(plot::emit_plots(r, temp_dir("empty")), DataError);
  EXPECT_THROW(plot::boxplot("t", {}), DataError);
  EXPECT_THROW(plot::rate_plot("t", {}), DataError);
}

TEST(Plot, SingleRecordStillRenders) {
  const auto r = experiments::exp_consistency({{"n_grid", {60}}, {"replicates", 1}}, 1);
  const auto files = plot::emit_plots(r, temp_dir("single"));
  ASSERT_EQ(files.size(), 1u);
  EXPECT_TRUE(std::filesystem::file_size(files[0]) > 100);
}

TEST(Plot, RateLegendQuotesSlope) {
  const std::string svg = plot::rate_plot("r", {{"err", {400, 1600, 6400}, {0.1, 0.05, 0.025}, -0.5, 0.0}});
  EXPECT_NE(svg.find("err: slope = -0.5000"), std::string::npos);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}

TEST(Plot, BytesDependOnlyOnReport) {
  const auto r = experiments::exp_efficiency({{"n", 50}, {"replicates", 3}, {"c13_grid", {0.4}}}, 2);
  const auto a = plot::emit_plots(r, temp_dir("bytes_a"));
  auto back = r;
  back.wall_clock_seconds = 1234.5;
  const auto b = plot::emit_plots(back, temp_dir("bytes_b"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::ifstream fa(a[i]), fb(b[i]);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb) << a[i];
  }
}
