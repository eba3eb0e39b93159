// cevit: data generation, training, evaluation and experiments.
//
// Exit codes: 0 ok, 2 usage, 3 data or parse error, 4 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cevit/copula.hpp"
#include "cevit/error.hpp"
#include "cevit/experiments.hpp"
#include "cevit/fit.hpp"
#include "cevit/metrics.hpp"
#include "cevit/model.hpp"
#include "cevit/plot.hpp"
#include "cevit/report.hpp"
#include "cevit/synthgen.hpp"

namespace fs = std::filesystem;
using namespace cevit;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--threads", c.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    json j = json::parse(ss.str());
    if (!j.is_object()) throw ParseError("config: top level must be an object", 0);
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), e.byte);
  }
}

json section(const json& cfg, const char* key) {
  if (!cfg.contains(key)) return json::object();
  if (!cfg[key].is_object()) throw ConfigError(std::string("config: '") + key + "' must be an object");
  return cfg[key];
}

report::Json ordered(const json& j) { return report::Json::parse(j.dump()); }

fs::path out_dir(const Common& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create " + c.out + ": " + ec.message());
  return fs::path(c.out);
}

/// Model spec from config with input_dim taken from the data. Defaults: a
/// linear encoder of the feature width for latent data, a one-hidden-layer
/// MLP for images.
model::ModelSpec model_for(const synthgen::Dataset& d, const json& cfg) {
  const int input = d.has_images() ? static_cast<int>(d.images->pixels())
                                   : static_cast<int>(d.left.rows());
  json m = section(cfg, "model");
  if (!m.contains("encoder")) {
    m["encoder"] = d.has_images()
                       ? json{{"kind", "mlp"}, {"hidden_dims", {32}}, {"output_dim", 16}}
                       : json{{"kind", "linear"}, {"output_dim", input}};
  }
  m["encoder"]["input_dim"] = input;
  return model::spec_from_json(m);
}

fit::TrainConfig train_for(const json& cfg, std::uint64_t seed) {
  fit::TrainConfig t = fit::train_config_from_json(section(cfg, "train"));
  t.seed = seed;
  return t;
}

synthgen::BlockImageOptions image_options(const json& c) {
  synthgen::BlockImageOptions o;
  try {
    o.block_size = c.value("block_size", o.block_size);
    const std::string range = c.value("operator_range", std::string("literal"));
    if (range == "literal") o.range = synthgen::OperatorRange::literal;
    else if (range == "full") o.range = synthgen::OperatorRange::full;
    else throw ConfigError("operator_range must be literal or full");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  return o;
}

// ---------------------------------------------------------------- commands

int cmd_gen_images(const Common& c, std::size_t n_flag, int block_flag, const std::string& range_flag) {
  const json data = section(load_config(c.config), "data");
  json opts = data;
  if (block_flag > 0) opts["block_size"] = block_flag;
  if (!range_flag.empty()) opts["operator_range"] = range_flag;
  const std::size_t n = n_flag ? n_flag : data.value("n", std::size_t{2000});
  const auto ds = synthgen::gen_block_images(n, c.seed, image_options(opts));
  const auto path = out_dir(c) / "images.csv";
  synthgen::write_dataset(path.string(), ds);
  std::cout << "wrote " << path.string() << " (" << n << " pairs)\n";
  return 0;
}

int cmd_gen_latent(const Common& c, std::size_t n_flag) {
  const json cfg = load_config(c.config);
  const json data = section(cfg, "data");
  report::Json echo;
  const auto spec = experiments::spec_from_config(ordered(data), echo);
  const std::size_t n = n_flag ? n_flag : data.value("n", std::size_t{2000});
  const auto ds = synthgen::gen_latent_model(spec, n, c.seed);
  const auto path = out_dir(c) / "latent.csv";
  synthgen::write_dataset(path.string(), ds);
  std::cout << "wrote " << path.string() << " (" << n << " samples)\n";
  return 0;
}

int cmd_fit(const Common& c, const std::string& data_path, const std::string& loss,
            const std::string& copula_src) {
  const json cfg = load_config(c.config);
  const auto kind = fit::loss_kind_from_string(loss);
  const auto ds = synthgen::read_dataset(data_path);
  const auto spec = model_for(ds, cfg);
  const auto train = train_for(cfg, c.seed);

  fit::CopulaSource src;
  if (copula_src == "empirical") {
    src = fit::CopulaSource::empirical();
  } else if (copula_src == "oracle") {
    if (!ds.latent) throw UsageError("--copula oracle needs a dataset with a .truth.json sidecar");
    src = fit::CopulaSource::fixed(synthgen::implied_params(*ds.latent));
  } else if (copula_src.rfind("file:", 0) == 0) {
    src = fit::CopulaSource::fixed(copula::read_params(copula_src.substr(5)));
  } else {
    throw UsageError("--copula must be empirical, oracle or file:<path>");
  }

  const auto data = fit::TrainData::from(ds);
  const auto dir = out_dir(c);
  fit::FeasibleResult r = [&] {
    try {
      return fit::run_feasible(data, spec, train, kind, src);
    } catch (const fit::DivergenceError& e) {
      report::write_text(dir / "trace.csv", fit::trace_csv(e.trace()));
      throw;
    }
  }();
  r.model.save((dir / "model.ckpt").string());
  copula::write_params((dir / "copula.json").string(), r.params);
  report::write_text(dir / "trace.csv", fit::trace_csv(r.trace));
  json summary = {{"loss", loss},
                  {"copula_source", copula_src},
                  {"data", data_path},
                  {"n", ds.n()},
                  {"model", model::to_json(spec)},
                  {"train", fit::to_json(train)},
                  {"estimate", estimator::to_json(estimator::Estimate{r.params, r.diagnostics})},
                  {"final_loss", r.trace.empty() ? 0.0 : r.trace.back().loss}};
  report::write_text(dir / "fit.json", summary.dump(2) + "\n");
  std::cout << "wrote " << (dir / "model.ckpt").string() << ", copula.json, trace.csv, fit.json\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& model_path, const std::string& data_path) {
  const auto m = model::BiChannelModel::load(model_path);
  const auto ds = synthgen::read_dataset(data_path);
  const auto data = fit::TrainData::from(ds);
  if (data.left.rows() != m.spec().encoder.input_dim) {
    throw DataError("model expects input width " + std::to_string(m.spec().encoder.input_dim) +
                    ", data has " + std::to_string(data.left.rows()));
  }
  const auto met = metrics::evaluate(fit::predict(m, data.left, data.right), data.labels);
  report::Json rec = {{"model", model_path}, {"data", data_path}, {"n", ds.n()}};
  rec.update(experiments::metric_record(met));
  const auto dir = out_dir(c);
  report::write_text(dir / "metrics.json", rec.dump(2) + "\n");
  report::write_text(dir / "metrics.csv", report::records_csv({rec}));
  std::cout << rec.dump(2) << "\n";
  return 0;
}

int write_and_print(const Common& c, const report::ExperimentReport& r) {
  const auto dir = out_dir(c);
  report::write_report(dir, r);
  std::cout << r.summary.dump(2) << "\nwrote " << (dir / "report.json").string() << " and records.csv ("
            << r.wall_clock_seconds << " s)\n";
  return 0;
}

int cmd_experiment(const Common& c, const std::string& which, int replicates) {
  json cfg = section(load_config(c.config), "experiment");
  if (replicates > 0) cfg["replicates"] = replicates;
  const auto oc = ordered(cfg);
  const int threads = resolve_threads(c.threads);
  if (which == "consistency") return write_and_print(c, experiments::exp_consistency(oc, c.seed, threads));
  if (which == "mle_equiv") return write_and_print(c, experiments::exp_mle_equiv(oc, c.seed, threads));
  return write_and_print(c, experiments::exp_efficiency(oc, c.seed, threads));
}

int cmd_cv(const Common& c, const std::string& data_path, int folds, int repeats) {
  const json cfg = load_config(c.config);
  synthgen::Dataset ds;
  if (!data_path.empty()) {
    ds = synthgen::read_dataset(data_path);
  } else {
    // Small blocks by default; the pixel MLP does not generalize at 72x72 with 2000 pairs.
    json data = section(cfg, "data");
    if (!data.contains("block_size")) data["block_size"] = 3;
    ds = synthgen::gen_block_images(data.value("n", std::size_t{2000}), c.seed, image_options(data));
  }
  const json cvc = section(cfg, "cv");
  experiments::CvOptions o;
  o.folds = folds > 0 ? folds : cvc.value("folds", 5);
  o.repeats = repeats > 0 ? repeats : cvc.value("repeats", 4);
  o.model = model_for(ds, cfg);
  o.train = train_for(cfg, c.seed);
  o.seed = c.seed;
  o.threads = resolve_threads(c.threads);
  auto r = experiments::run_cv(ds, o);
  r.config["data"] = data_path.empty() ? report::Json(ordered(ds.options)) : report::Json(data_path);
  return write_and_print(c, r);
}

int cmd_plot(const Common& c, const std::string& report_path) {
  const auto r = report::read_report(report_path);
  for (const auto& p : plot::emit_plots(r, c.out)) std::cout << "wrote " << p.string() << "\n";
  return 0;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::usage:
    case Error::Kind::config:
      return 2;
    case Error::Kind::parse:
    case Error::Kind::io:
    case Error::Kind::data:
      return 3;
    default:
      return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Copula-loss training and experiments for paired mixed-type outputs"};
  app.require_subcommand(1);

  Common c;
  std::size_t n = 0;
  int block_size = 0, replicates = 0, folds = 0, repeats = 0;
  std::string range, data, loss = "copula", copula_src = "empirical", model_path, report_path;

  auto* gi = app.add_subcommand("gen-images", "generate paired block images with mixed labels");
  add_common(gi, c);
  gi->add_option("--n", n, "number of image pairs");
  gi->add_option("--block-size", block_size, "block side in pixels (image is 3x)");
  gi->add_option("--range", range, "operator range")->check(CLI::IsMember({"literal", "full"}));

  auto* gl = app.add_subcommand("gen-latent", "generate latent-model features and labels");
  add_common(gl, c);
  gl->add_option("--n", n, "number of samples");

  auto* ft = app.add_subcommand("fit", "train the bi-channel model");
  add_common(ft, c);
  ft->add_option("--data", data, "dataset CSV")->required();
  ft->add_option("--loss", loss, "empirical or copula")->check(CLI::IsMember({"empirical", "copula"}));
  ft->add_option("--copula", copula_src, "empirical, oracle or file:<path>");

  auto* ev = app.add_subcommand("eval", "held-out metrics of a checkpoint");
  add_common(ev, c);
  ev->add_option("--model", model_path, "checkpoint")->required();
  ev->add_option("--data", data, "dataset CSV")->required();

  auto* ec = app.add_subcommand("exp-consistency", "copula estimator error vs n");
  auto* em = app.add_subcommand("exp-mle-equiv", "feasible estimate vs MLE distance vs n");
  auto* ee = app.add_subcommand("exp-efficiency", "empirical vs feasible estimator error");
  for (auto* s : {ec, em, ee}) {
    add_common(s, c);
    s->add_option("--replicates", replicates, "override replicate count");
  }

  auto* cv = app.add_subcommand("cv", "repeated k-fold cross-validation, copula vs empirical loss");
  add_common(cv, c);
  cv->add_option("--data", data, "dataset CSV (default: generate block images)");
  cv->add_option("--folds", folds, "folds per repeat");
  cv->add_option("--repeats", repeats, "repeats");

  auto* pl = app.add_subcommand("plot", "SVG figures from a report");
  add_common(pl, c);
  pl->add_option("--report", report_path, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gi) return cmd_gen_images(c, n, block_size, range);
    if (*gl) return cmd_gen_latent(c, n);
    if (*ft) return cmd_fit(c, data, loss, copula_src);
    if (*ev) return cmd_eval(c, model_path, data);
    if (*ec) return cmd_experiment(c, "consistency", replicates);
    if (*em) return cmd_experiment(c, "mle_equiv", replicates);
    if (*ee) return cmd_experiment(c, "efficiency", replicates);
    if (*cv) return cmd_cv(c, data, folds, repeats);
    if (*pl) return cmd_plot(c, report_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
