#pragma once

// Static SVG figures for experiment reports: metric boxplots, win-count bars
// and log-log rate plots. Output bytes depend only on the report.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cevit/error.hpp"
#include "cevit/report.hpp"

namespace cevit::plot {

using report::Json;

struct Series {
  std::string label;
  std::vector<double> values;
};

struct RateSeries {
  std::string label;
  std::vector<double> x, y;
  double slope, intercept;
};

namespace detail {

constexpr int kW = 720, kH = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

inline std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

inline std::string label_num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kW) +
         "\" height=\"" + std::to_string(kH) + "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + std::to_string(kW / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(title) + "</text>\n";
}

inline std::string line(double x1, double y1, double x2, double y2, const std::string& color,
                        double width = 1.0, const std::string& extra = "") {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
         num(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + num(width) + "\"" + extra +
         "/>\n";
}

inline std::string text(double x, double y, const std::string& s, const std::string& anchor = "middle") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" +
         escape(s) + "</text>\n";
}

struct Axis {
  double lo, hi;
  double px(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

inline Axis padded(double lo, double hi) {
  if (!(hi > lo)) {
    const double d = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - d, hi + d};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

inline std::string y_ticks(const Axis& ax, bool log_scale = false) {
  std::string o;
  const double y0 = kH - kBottom, y1 = kTop;
  for (int k = 0; k <= 4; ++k) {
    const double v = ax.lo + (ax.hi - ax.lo) * k / 4.0;
    const double py = ax.px(v, y0, y1);
    o += line(kLeft - 4, py, kLeft, py, "black");
    o += text(kLeft - 6, py + 4, label_num(log_scale ? std::exp(v) : v), "end");
  }
  o += line(kLeft, y0, kLeft, y1, "black");
  o += line(kLeft, y0, kW - kRight, y0, "black");
  return o;
}

/// Type-7 quantile of sorted data.
inline double quantile(const std::vector<double>& s, double p) {
  const double h = (static_cast<double>(s.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace detail

/// Box (quartiles), median bar, whiskers to min/max. One value renders as a
/// flat line.
inline std::string boxplot(const std::string& title, const std::vector<Series>& groups) {
  using namespace detail;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& g : groups)
    for (double v : g.values)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) throw DataError("no records");
  const Axis ax = padded(lo, hi);
  std::string o = header(title) + y_ticks(ax);
  const double slot = double(kW - kLeft - kRight) / static_cast<double>(groups.size());
  const double y0 = kH - kBottom, y1 = kTop;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::vector<double> s;
    for (double v : groups[i].values)
      if (std::isfinite(v)) s.push_back(v);
    const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
    const double half = std::min(30.0, slot * 0.3);
    const std::string col = kColors[i % 8];
    o += text(cx, y0 + 18, groups[i].label);
    if (s.empty()) continue;
    std::sort(s.begin(), s.end());
    const double q1 = quantile(s, 0.25), q2 = quantile(s, 0.5), q3 = quantile(s, 0.75);
    const double p1 = ax.px(q1, y0, y1), p2 = ax.px(q2, y0, y1), p3 = ax.px(q3, y0, y1);
    o += line(cx, ax.px(s.front(), y0, y1), cx, p1, col);
    o += line(cx, p3, cx, ax.px(s.back(), y0, y1), col);
    if (q3 > q1) {
      o += "<rect x=\"" + num(cx - half) + "\" y=\"" + num(p3) + "\" width=\"" + num(2 * half) +
           "\" height=\"" + num(p1 - p3) + "\" fill=\"none\" stroke=\"" + col + "\"/>\n";
    }
    o += line(cx - half, p2, cx + half, p2, col, 2.0);
  }
  return o + "</svg>\n";
}

inline std::string bars(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& values,
                        const std::vector<std::string>& legend) {
  using namespace detail;
  double hi = 0.0;
  for (const auto& v : values)
    for (double x : v) hi = std::max(hi, x);
  if (labels.empty()) throw DataError("no records");
  const Axis ax{0.0, hi > 0.0 ? hi * 1.1 : 1.0};
  std::string o = header(title) + y_ticks(ax);
  const double slot = double(kW - kLeft - kRight) / static_cast<double>(labels.size());
  const double y0 = kH - kBottom, y1 = kTop;
  const double bw = slot * 0.7 / static_cast<double>(std::max<std::size_t>(1, legend.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x0 = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    for (std::size_t k = 0; k < values[i].size(); ++k) {
      const double top = ax.px(values[i][k], y0, y1);
      o += "<rect x=\"" + num(x0 + bw * static_cast<double>(k)) + "\" y=\"" + num(top) +
           "\" width=\"" + num(bw) + "\" height=\"" + num(y0 - top) + "\" fill=\"" +
           kColors[k % 8] + "\"/>\n";
    }
    o += text(kLeft + slot * (static_cast<double>(i) + 0.5), y0 + 18, labels[i]);
  }
  for (std::size_t k = 0; k < legend.size(); ++k) {
    const double ly = kTop + 14.0 * static_cast<double>(k);
    o += "<rect x=\"" + num(kW - 150) + "\" y=\"" + num(ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
         kColors[k % 8] + "\"/>\n";
    o += text(kW - 135, ly, legend[k], "start");
  }
  return o + "</svg>\n";
}

/// Log-log points with the fitted line; the legend quotes each slope.
inline std::string rate_plot(const std::string& title, const std::vector<RateSeries>& series) {
  using namespace detail;
  double xl = INFINITY, xh = -INFINITY, yl = INFINITY, yh = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0)) continue;
      xl = std::min(xl, std::log(s.x[i]));
      xh = std::max(xh, std::log(s.x[i]));
      yl = std::min(yl, std::log(s.y[i]));
      yh = std::max(yh, std::log(s.y[i]));
    }
  }
  if (!std::isfinite(xl)) throw DataError("no records");
  const Axis ax = padded(xl, xh), ay = padded(yl, yh);
  std::string o = header(title) + y_ticks(ay, true);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  for (const auto& s : series) {
    for (double x : s.x) {
      if (x > 0.0) o += text(ax.px(std::log(x), x0, x1), y0 + 18, label_num(x));
    }
    break;
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string col = kColors[k % 8];
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0)) continue;
      o += "<circle cx=\"" + num(ax.px(std::log(s.x[i]), x0, x1)) + "\" cy=\"" +
           num(ay.px(std::log(s.y[i]), y0, y1)) + "\" r=\"3\" fill=\"" + col + "\"/>\n";
    }
    if (std::isfinite(s.slope)) {
      const double a = xl, b = xh;
      o += line(ax.px(a, x0, x1), ay.px(s.intercept + s.slope * a, y0, y1), ax.px(b, x0, x1),
                ay.px(s.intercept + s.slope * b, y0, y1), col, 1.0, " stroke-dasharray=\"4 3\"");
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s: slope = %.4f", s.label.c_str(), s.slope);
    o += "<text x=\"" + num(kW - 230) + "\" y=\"" + num(kTop + 14.0 * static_cast<double>(k)) +
         "\" fill=\"" + col + "\">" + escape(buf) + "</text>\n";
  }
  return o + "</svg>\n";
}

/// Writes the figures for a report into out_dir; returns the paths written.
inline std::vector<std::filesystem::path> emit_plots(const report::ExperimentReport& r,
                                                     const std::filesystem::path& out_dir) {
  if (r.records.empty()) throw DataError("no records");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::pair<std::string, std::string>> files;
  auto doubles = [](const Json& a) {
    std::vector<double> v;
    for (const auto& x : a) v.push_back(x.is_number() ? x.get<double>() : std::nan(""));
    return v;
  };
  auto num_or_nan = [](const Json& x) { return x.is_number() ? x.get<double>() : std::nan(""); };

  if (r.id == "cv") {
    const char* metrics[] = {"mse_left", "mse_right", "acc_left", "acc_right", "auc_left", "auc_right"};
    for (const char* m : metrics) {
      std::vector<Series> g;
      for (const std::string meth : {"empirical", "copula"}) {
        g.push_back({meth, report::column(r.records, m, [&](const Json& x) {
                       return x.at("method").get<std::string>() == meth;
                     })});
      }
      files.emplace_back(std::string("cv_") + m + ".svg", boxplot(m, g));
    }
    std::vector<std::string> labels;
    std::vector<std::vector<double>> vals;
    for (const char* m : metrics) {
      const auto& w = r.summary.at("win_counts").at(m);
      labels.push_back(m);
      vals.push_back({w.at("copula").get<double>(), w.at("empirical").get<double>()});
    }
    files.emplace_back("cv_wins.svg", bars("win counts per fold", labels, vals, {"copula", "empirical"}));
  } else if (r.id == "consistency") {
    std::vector<RateSeries> s;
    const auto grid = doubles(r.summary.at("n_grid"));
    for (const auto& [name, p] : r.summary.at("parameters").items()) {
      s.push_back({name, grid, doubles(p.at("median_abs_error")), num_or_nan(p.at("slope")),
                   num_or_nan(p.at("intercept"))});
    }
    files.emplace_back("consistency_rate.svg", rate_plot("median |estimate - truth| vs n", s));
  } else if (r.id == "mle_equiv") {
    const auto& sm = r.summary;
    files.emplace_back("mle_equiv_rate.svg",
                       rate_plot("median |b_fes - b_mle| vs n",
                                 {{"distance", doubles(sm.at("n_grid")), doubles(sm.at("median_distance")),
                                   num_or_nan(sm.at("slope")), num_or_nan(sm.at("intercept"))}}));
  } else if (r.id == "efficiency") {
    std::vector<Series> g;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> ratios;
    for (const auto& c : r.summary.at("cases")) {
      const std::string name = c.at("case").get<std::string>();
      auto in_case = [&](const Json& x) { return x.at("case").get<std::string>() == name; };
      g.push_back({name + " ols", report::column(r.records, "se_ols", in_case)});
      g.push_back({name + " fes", report::column(r.records, "se_fes", in_case)});
      labels.push_back(name);
      ratios.push_back({num_or_nan(c.at("ratio"))});
    }
    files.emplace_back("efficiency_se.svg", boxplot("squared error to truth", g));
    files.emplace_back("efficiency_ratio.svg",
                       bars("MSE ratio feasible / empirical", labels, ratios, {"ratio"}));
  } else {
    throw UsageError("no plots for experiment '" + r.id + "'");
  }

  std::vector<std::filesystem::path> out;
  for (const auto& [name, svg] : files) {
    report::write_text(out_dir / name, svg);
    out.push_back(out_dir / name);
  }
  return out;
}

}  // namespace cevit::plot
