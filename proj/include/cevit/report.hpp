#pragma once

// Experiment reports: flat per-fold / per-replicate records, summaries
// derived from them, and the small statistics the summaries need.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "cevit/error.hpp"

namespace cevit::report {

using Json = nlohmann::ordered_json;

struct ExperimentReport {
  std::string id;
  Json config = Json::object();
  std::vector<Json> records;  // flat objects: numbers, strings, bools
  Json summary = Json::object();
  double wall_clock_seconds = 0.0;
};

// ---------------------------------------------------------------- statistics

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd(std::span<const double> v) {
  if (v.size() < 2) return std::nan("");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct LineFit {
  double slope = std::nan("");
  double intercept = std::nan("");
};

/// Least-squares line through (log x, log y). Non-positive y are skipped.
inline LineFit loglog_fit(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2) return {};
  const double mx = mean(lx), my = mean(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  const double b = sxy / sxx;
  return {b, my - b * mx};
}

struct PairedTest {
  double mean_diff = std::nan("");
  double t = std::nan("");
  double p_greater = std::nan("");  // H1: mean(d) > 0
  double p_two_sided = std::nan("");
};

/// Paired t-test on differences d.
inline PairedTest paired_t(std::span<const double> d) {
  PairedTest r;
  if (d.size() < 2) return r;
  r.mean_diff = mean(d);
  const double s = sd(d);
  if (!(s > 0.0)) return r;
  r.t = r.mean_diff / (s / std::sqrt(static_cast<double>(d.size())));
  const boost::math::students_t dist(static_cast<double>(d.size() - 1));
  r.p_greater = boost::math::cdf(boost::math::complement(dist, r.t));
  r.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

/// Two-sided exact sign test; ties are dropped beforehand by the caller.
inline double sign_test_p(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0) return 1.0;
  const boost::math::binomial dist(n, 0.5);
  const int k = std::min(wins, losses);
  return std::min(1.0, 2.0 * boost::math::cdf(dist, static_cast<double>(k)));
}

// ---------------------------------------------------------------- records

inline std::vector<double> column(const std::vector<Json>& recs, const std::string& key,
                                  const std::function<bool(const Json&)>& keep = nullptr) {
  std::vector<double> out;
  for (const auto& r : recs) {
    if (keep && !keep(r)) continue;
    const auto it = r.find(key);
    if (it == r.end() || !it->is_number()) continue;
    out.push_back(it->get<double>());
  }
  return out;
}

inline Json describe(const std::vector<double>& v) {
  return {{"count", v.size()}, {"mean", mean(v)}, {"sd", sd(v)}, {"median", median(v)}};
}

inline std::string format_value(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number()) {
    const double d = v.get<double>();
    if (std::isnan(d)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

/// Header is the union of keys in order of first appearance.
inline std::string records_csv(const std::vector<Json>& recs) {
  std::vector<std::string> cols;
  for (const auto& r : recs) {
    for (auto it = r.begin(); it != r.end(); ++it) {
      if (std::find(cols.begin(), cols.end(), it.key()) == cols.end()) cols.push_back(it.key());
    }
  }
  std::string out;
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
  out += "\n";
  for (const auto& r : recs) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out += ",";
      const auto it = r.find(cols[c]);
      if (it != r.end()) out += format_value(*it);
    }
    out += "\n";
  }
  return out;
}

inline Json to_json(const ExperimentReport& r) {
  Json j;
  j["experiment"] = r.id;
  j["config"] = r.config;
  j["summary"] = r.summary;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  j["records"] = r.records;
  return j;
}

inline ExperimentReport report_from_json(const Json& j) {
  ExperimentReport r;
  try {
    r.id = j.at("experiment").get<std::string>();
    r.config = j.value("config", Json::object());
    r.summary = j.value("summary", Json::object());
    r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    for (const auto& rec : j.at("records")) r.records.push_back(rec);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what(), 0);
  }
  return r;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("write failed: " + p.string());
}

/// <dir>/report.json and <dir>/records.csv. Only report.json carries the
/// wall-clock time.
inline void write_report(const std::filesystem::path& dir, const ExperimentReport& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "records.csv", records_csv(r.records));
}

inline ExperimentReport read_report(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("report: ") + e.what(), e.byte);
  }
  return report_from_json(j);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace cevit::report
