#pragma once

// Synthetic data: paired block images with mixed responses, and the latent
// representation model where the implied copula is known in closed form.
// Dataset files: a CSV table plus sidecars for images and ground truth.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cevit/copula.hpp"
#include "cevit/error.hpp"
#include "cevit/rng.hpp"

namespace cevit::synthgen {

inline constexpr const char* kGeneratorVersion = "cevit-synthgen 1";

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  return rng::stream(seed, index);
}

// ---------------------------------------------------------------- images

enum class OperatorRange { literal, full };

struct BlockImageOptions {
  int block_size = 24;  // images are 3 * block_size square
  OperatorRange range = OperatorRange::literal;
  double bright_mean = 0.5;
  double pixel_var = 0.25;
  double pixel_cov = 0.125;
};

struct ImageSet {
  int height = 0;
  int width = 0;
  std::vector<float> left;   // sample-major, row-major
  std::vector<float> right;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t n() const { return pixels() ? left.size() / pixels() : 0; }
};

/// Response noise covariance for (e1, e2, e3, e4).
inline Eigen::Matrix4d block_noise_cov() {
  Eigen::Matrix4d s;
  s << 1.0, 0.5, 0.5, 0.125,
       0.5, 1.0, 0.125, 0.5,
       0.5, 0.125, 1.0, 0.5,
       0.125, 0.5, 0.5, 1.0;
  return s;
}

struct BlockOperators {
  double s;       // sum of the regression operators
  double s_star;  // sum of the classification operators
};

/// Block operators on one image given as a row-major float array.
inline BlockOperators block_operators(const float* img, int block_size, OperatorRange range) {
  const int width = 3 * block_size;
  const int r = range == OperatorRange::literal ? std::min(3, block_size) : block_size;
  auto px = [&](int t, int s, int k, int l) {
    return static_cast<double>(img[(t * block_size + k) * width + s * block_size + l]);
  };
  double s11 = 0.0, s22 = 0.0, sum33 = 0.0;
  for (int k = 0; k < r; ++k) {
    for (int l = 0; l < r; ++l) {
      s11 += std::tanh(px(0, 0, k, l));
      s22 += px(1, 1, k, l);
      sum33 += px(2, 2, k, l);
    }
  }
  return {s11 + s22 + std::tanh(sum33), s22};
}

// ---------------------------------------------------------------- latent model

struct LatentModelSpec {
  int d0 = 4;
  std::array<Vector, 4> beta;  // beta1..beta4
  double sigma_1a = 1.0;
  double sigma_2a = 1.0;
  /// Correlations between the four latent blocks; Sigma_ij = c_ij s_i s_j I.
  Eigen::Matrix4d block_corr = Eigen::Matrix4d::Identity();
  Eigen::Matrix2d sigma_eps = Eigen::Matrix2d::Identity();  // diag (s1B^2, s2B^2)
  double feature_corr = 0.5;   // between the two channels, per coordinate
  double feature_scale = 1.0;  // SD of each feature coordinate
  double feature_mean = 0.0;   // common mean of every feature coordinate
};

/// SDs of the four latent blocks: sigma_1a, 1/|beta2|, sigma_2a, 1/|beta4|.
inline Eigen::Vector4d block_sd(const LatentModelSpec& s) {
  return {s.sigma_1a, 1.0 / s.beta[1].norm(), s.sigma_2a, 1.0 / s.beta[3].norm()};
}

inline std::vector<std::string> validate(const LatentModelSpec& s) {
  std::vector<std::string> out;
  if (s.d0 < 1) {
    out.emplace_back("d0 must be positive");
    return out;
  }
  for (int k = 0; k < 4; ++k) {
    if (s.beta[k].size() != s.d0) out.push_back("beta" + std::to_string(k + 1) + " length != d0");
  }
  if (!out.empty()) return out;
  if (!(s.beta[1].norm() > 0.0) || !(s.beta[3].norm() > 0.0)) {
    out.emplace_back("beta2 and beta4 must be nonzero");
  }
  if (!(s.sigma_1a > 0.0) || !(s.sigma_2a > 0.0)) out.emplace_back("sigma_1a, sigma_2a must be > 0");
  for (int i = 0; i < 4; ++i) {
    if (s.block_corr(i, i) != 1.0) out.emplace_back("block_corr diagonal must be 1");
    for (int j = 0; j < 4; ++j) {
      if (s.block_corr(i, j) != s.block_corr(j, i)) out.emplace_back("block_corr not symmetric");
    }
  }
  if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(s.block_corr).eigenvalues()(0) <= 0.0) {
    out.emplace_back("Sigma_Z not positive definite");
  }
  if (s.sigma_eps(0, 1) != s.sigma_eps(1, 0) || !(s.sigma_eps(0, 0) > 0.0) ||
      !(s.sigma_eps.determinant() > 0.0)) {
    out.emplace_back("Sigma_eps not positive definite");
  }
  if (!(std::abs(s.feature_corr) < 1.0)) out.emplace_back("feature_corr must be in (-1, 1)");
  if (!(s.feature_scale > 0.0)) out.emplace_back("feature_scale must be > 0");
  if (!std::isfinite(s.feature_mean)) out.emplace_back("feature_mean must be finite");
  return out;
}

inline void require_valid(const LatentModelSpec& s) {
  const auto v = validate(s);
  if (v.empty()) return;
  std::string msg = "invalid latent model spec:";
  for (const auto& e : v) msg += " " + e + ";";
  throw ConfigError(msg);
}

/// Covariance of (y1, -ytilde2, y3, -ytilde4) given the features. The sign
/// flips turn y = 1{ytilde <= 0} into the probit convention y = 1{u >= -q}.
inline Eigen::Matrix4d response_latent_cov(const LatentModelSpec& s) {
  const Eigen::Vector4d sd = block_sd(s);
  const std::array<Vector, 4> b{s.beta[0], -s.beta[1], s.beta[2], -s.beta[3]};
  Eigen::Matrix4d cov;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) cov(i, j) = s.block_corr(i, j) * sd(i) * sd(j) * b[i].dot(b[j]);
  cov(0, 0) += s.sigma_eps(0, 0);
  cov(0, 2) += s.sigma_eps(0, 1);
  cov(2, 0) += s.sigma_eps(1, 0);
  cov(2, 2) += s.sigma_eps(1, 1);
  return cov;
}

/// Copula parameters implied by a latent model, in latent order (y1, y3, y2, y4).
inline copula::CopulaParams implied_params(const LatentModelSpec& s) {
  require_valid(s);
  const Eigen::Matrix4d c = response_latent_cov(s);
  const std::array<int, 4> perm{0, 2, 1, 3};
  Eigen::Matrix4d p;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) p(i, j) = c(perm[i], perm[j]);
  const Eigen::Vector4d d = p.diagonal().cwiseSqrt();
  copula::CopulaParams out;
  out.sigma1 = d(0);
  out.sigma2 = d(1);
  out.gamma = d.cwiseInverse().asDiagonal() * p * d.cwiseInverse().asDiagonal();
  out.gamma.diagonal().setOnes();
  out.gamma = 0.5 * (out.gamma + out.gamma.transpose()).eval();
  return out;
}

/// Means (m1, m2, q1, q2) given the features. ytilde has unit variance, so
/// the probit coefficient of y2 is -beta2.
inline Eigen::Matrix<double, 4, Eigen::Dynamic> oracle_means(const LatentModelSpec& s,
                                                             const Matrix& left,
                                                             const Matrix& right) {
  Eigen::Matrix<double, 4, Eigen::Dynamic> m(4, left.cols());
  const double t2 = std::sqrt(response_latent_cov(s)(1, 1));
  const double t4 = std::sqrt(response_latent_cov(s)(3, 3));
  m.row(0) = s.beta[0].transpose() * left;
  m.row(1) = s.beta[2].transpose() * right;
  m.row(2) = -(s.beta[1].transpose() * left) / t2;
  m.row(3) = -(s.beta[3].transpose() * right) / t4;
  return m;
}

inline nlohmann::json to_json(const LatentModelSpec& s) {
  nlohmann::json beta = nlohmann::json::array();
  for (const auto& b : s.beta) beta.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  std::vector<double> bc(16), se(4);
  for (int i = 0; i < 16; ++i) bc[i] = s.block_corr(i / 4, i % 4);
  for (int i = 0; i < 4; ++i) se[i] = s.sigma_eps(i / 2, i % 2);
  return {{"d0", s.d0},           {"beta", beta},
          {"sigma_1a", s.sigma_1a}, {"sigma_2a", s.sigma_2a},
          {"block_corr", bc},     {"sigma_eps", se},
          {"feature_corr", s.feature_corr}, {"feature_scale", s.feature_scale},
          {"feature_mean", s.feature_mean}};
}

inline LatentModelSpec latent_spec_from_json(const nlohmann::json& j) {
  try {
    LatentModelSpec s;
    s.d0 = j.at("d0").get<int>();
    const auto beta = j.at("beta");
    if (!beta.is_array() || beta.size() != 4) throw ConfigError("latent spec: beta needs 4 vectors");
    for (int k = 0; k < 4; ++k) {
      const auto v = beta[k].get<std::vector<double>>();
      s.beta[k] = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    s.sigma_1a = j.value("sigma_1a", 1.0);
    s.sigma_2a = j.value("sigma_2a", 1.0);
    if (j.contains("block_corr")) {
      const auto v = j["block_corr"].get<std::vector<double>>();
      if (v.size() != 16) throw ConfigError("latent spec: block_corr needs 16 values");
      for (int i = 0; i < 16; ++i) s.block_corr(i / 4, i % 4) = v[i];
    }
    if (j.contains("sigma_eps")) {
      const auto v = j["sigma_eps"].get<std::vector<double>>();
      if (v.size() != 4) throw ConfigError("latent spec: sigma_eps needs 4 values");
      for (int i = 0; i < 4; ++i) s.sigma_eps(i / 2, i % 2) = v[i];
    }
    s.feature_corr = j.value("feature_corr", 0.5);
    s.feature_scale = j.value("feature_scale", 1.0);
    s.feature_mean = j.value("feature_mean", 0.0);
    require_valid(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("latent spec: ") + e.what());
  }
}

// ---------------------------------------------------------------- datasets

struct Dataset {
  std::vector<copula::MixedLabel> labels;
  Matrix left;   // features, one column per sample (empty for image data)
  Matrix right;
  std::optional<ImageSet> images;
  std::optional<LatentModelSpec> latent;  // ground truth for latent-model data
  std::uint64_t seed = 0;
  std::string generator = kGeneratorVersion;
  nlohmann::json options = nlohmann::json::object();

  std::size_t n() const { return labels.size(); }
  bool has_images() const { return images.has_value(); }

  /// Inputs as model-ready column matrices (image pixels flattened row-major).
  Matrix input(int channel) const {
    if (!images) return channel == 0 ? left : right;
    const auto& px = channel == 0 ? images->left : images->right;
    const auto p = static_cast<Eigen::Index>(images->pixels());
    Matrix x(p, static_cast<Eigen::Index>(n()));
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < p; ++i) x(i, j) = px[static_cast<std::size_t>(j * p + i)];
    return x;
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset d;
    d.seed = seed;
    d.generator = generator;
    d.options = options;
    d.latent = latent;
    for (std::size_t i : idx) d.labels.push_back(labels.at(i));
    if (images) {
      ImageSet im{images->height, images->width, {}, {}};
      const std::size_t p = images->pixels();
      for (std::size_t i : idx) {
        im.left.insert(im.left.end(), images->left.begin() + i * p, images->left.begin() + (i + 1) * p);
        im.right.insert(im.right.end(), images->right.begin() + i * p,
                        images->right.begin() + (i + 1) * p);
      }
      d.images = std::move(im);
    } else {
      d.left.resize(left.rows(), static_cast<Eigen::Index>(idx.size()));
      d.right.resize(right.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        d.left.col(static_cast<Eigen::Index>(k)) = left.col(static_cast<Eigen::Index>(idx[k]));
        d.right.col(static_cast<Eigen::Index>(k)) = right.col(static_cast<Eigen::Index>(idx[k]));
      }
    }
    return d;
  }
};

inline Dataset gen_block_images(std::size_t n, std::uint64_t seed,
                                const BlockImageOptions& opt = {}) {
  if (n < 1) throw UsageError("gen_block_images: n must be >= 1");
  if (opt.block_size < 1) throw ConfigError("gen_block_images: block_size must be >= 1");
  const int side = 3 * opt.block_size;
  const double a = std::sqrt(opt.pixel_var);
  const double r = opt.pixel_cov / opt.pixel_var;
  const double b = std::sqrt(1.0 - r * r);
  const Eigen::Matrix4d noise_l = block_noise_cov().llt().matrixL();

  Dataset d;
  d.seed = seed;
  d.options = {{"kind", "block_images"},
               {"block_size", opt.block_size},
               {"operator_range", opt.range == OperatorRange::literal ? "literal" : "full"}};
  ImageSet im{side, side, {}, {}};
  const std::size_t p = im.pixels();
  im.left.resize(n * p);
  im.right.resize(n * p);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = sample_rng(seed, i);
    std::normal_distribution<double> n01;
    float* xl = im.left.data() + i * p;
    float* xr = im.right.data() + i * p;
    for (int row = 0; row < side; ++row) {
      for (int col = 0; col < side; ++col) {
        const bool bright = row >= 2 * opt.block_size && col >= 2 * opt.block_size;
        const double mu = bright ? opt.bright_mean : 0.0;
        const double u = n01(rng), v = n01(rng);
        xl[row * side + col] = static_cast<float>(mu + a * u);
        xr[row * side + col] = static_cast<float>(mu + a * (r * u + b * v));
      }
    }
    Eigen::Vector4d z;
    for (int k = 0; k < 4; ++k) z(k) = n01(rng);
    const Eigen::Vector4d e = noise_l * z;
    const auto ol = block_operators(xl, opt.block_size, opt.range);
    const auto orr = block_operators(xr, opt.block_size, opt.range);
    auto rate = [](double s, double noise) {
      return std::clamp(1.0 / (1.0 + std::exp(-s)) + noise, 0.0, 1.0);
    };
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u2 = unif(rng), u4 = unif(rng);
    auto& y = d.labels[i];
    y.y1 = ol.s + e(0);
    y.y3 = orr.s + e(2);
    y.y2 = u2 < rate(ol.s_star, e(1)) ? 1 : 0;
    y.y4 = u4 < rate(orr.s_star, e(3)) ? 1 : 0;
  }
  d.images = std::move(im);
  return d;
}

inline Dataset gen_latent_model(const LatentModelSpec& spec, std::size_t n, std::uint64_t seed) {
  require_valid(spec);
  if (n < 1) throw UsageError("gen_latent_model: n must be >= 1");
  const int d0 = spec.d0;
  const Eigen::Vector4d sd = block_sd(spec);
  const Eigen::Matrix4d zl =
      Eigen::Matrix4d((sd.asDiagonal() * spec.block_corr * sd.asDiagonal()).eval()).llt().matrixL();
  const Eigen::Matrix2d el = spec.sigma_eps.llt().matrixL();
  const double fc = spec.feature_corr, fs = std::sqrt(1.0 - fc * fc);

  Dataset d;
  d.seed = seed;
  d.latent = spec;
  d.options = {{"kind", "latent"}, {"spec", to_json(spec)}};
  d.left.resize(d0, static_cast<Eigen::Index>(n));
  d.right.resize(d0, static_cast<Eigen::Index>(n));
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = sample_rng(seed, i);
    std::normal_distribution<double> n01;
    const auto col = static_cast<Eigen::Index>(i);
    for (int k = 0; k < d0; ++k) {
      const double u = n01(rng), v = n01(rng);
      d.left(k, col) = spec.feature_mean + spec.feature_scale * u;
      d.right(k, col) = spec.feature_mean + spec.feature_scale * (fc * u + fs * v);
    }
    // Z = stacked features + (L kron I) E; only beta_b' Z_b is needed, so
    // accumulate the four projections coordinate by coordinate.
    double proj[4] = {0.0, 0.0, 0.0, 0.0};
    for (int k = 0; k < d0; ++k) {
      double e[4];
      for (double& v : e) v = n01(rng);
      for (int b = 0; b < 4; ++b) {
        double dz = 0.0;
        for (int c = 0; c <= b; ++c) dz += zl(b, c) * e[c];
        const double mean = b < 2 ? d.left(k, col) : d.right(k, col);
        proj[b] += spec.beta[b][k] * (mean + dz);
      }
    }
    const double u1 = n01(rng), u2 = n01(rng);
    const double eps0 = el(0, 0) * u1;
    const double eps1 = el(1, 0) * u1 + el(1, 1) * u2;
    auto& y = d.labels[i];
    y.y1 = proj[0] + eps0;
    y.y2 = proj[1] <= 0.0 ? 1 : 0;
    y.y3 = proj[2] + eps1;
    y.y4 = proj[3] <= 0.0 ? 1 : 0;
  }
  return d;
}

// ---------------------------------------------------------------- file I/O

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), {}};
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string sidecar(const std::string& csv, const std::string& suffix) {
  std::filesystem::path p(csv);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

inline float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  return std::bit_cast<float>(bits);
}

/// Minimal CSV cursor over numeric fields; errors carry the byte offset.
class CsvCursor {
 public:
  explicit CsvCursor(const std::string& text) : s_(text) {}

  bool at_end() const { return pos_ >= s_.size(); }
  std::size_t pos() const { return pos_; }

  std::string header_line() {
    const auto end = s_.find('\n', pos_);
    if (end == std::string::npos) throw ParseError("csv: missing header line", pos_);
    std::string line = s_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos_ = end + 1;
    return line;
  }

  double number(bool last) {
    double v = 0.0;
    const char* b = s_.data() + pos_;
    const char* e = s_.data() + s_.size();
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc()) throw ParseError("csv: expected a number", pos_);
    pos_ += static_cast<std::size_t>(res.ptr - b);
    separator(last);
    return v;
  }

  std::string token(bool last) {
    const auto end = s_.find_first_of(",\r\n", pos_);
    const std::string t = s_.substr(pos_, end == std::string::npos ? std::string::npos : end - pos_);
    pos_ = end == std::string::npos ? s_.size() : end;
    separator(last);
    return t;
  }

 private:
  void separator(bool last) {
    if (!last) {
      if (pos_ >= s_.size() || s_[pos_] != ',') throw ParseError("csv: expected ','", pos_);
      ++pos_;
      return;
    }
    if (pos_ < s_.size() && s_[pos_] == '\r') ++pos_;
    if (pos_ < s_.size() && s_[pos_] != '\n') throw ParseError("csv: expected end of line", pos_);
    if (pos_ < s_.size()) ++pos_;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

inline int binary_label(double v, std::size_t offset) {
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  throw ParseError("csv: binary label must be 0 or 1", offset);
}

}  // namespace detail

/// Writes <path> (CSV) and, as needed, <stem>.images.bin + <stem>.images.json
/// and <stem>.truth.json next to it.
inline void write_dataset(const std::string& path, const Dataset& d) {
  std::string csv = "y1,y2,y3,y4";
  if (d.images) {
    csv += ",image_file,image_index";
  } else {
    for (Eigen::Index k = 0; k < d.left.rows(); ++k) csv += ",l" + std::to_string(k);
    for (Eigen::Index k = 0; k < d.right.rows(); ++k) csv += ",r" + std::to_string(k);
  }
  csv += "\n";
  const std::string img_bin = detail::sidecar(path, ".images.bin");
  const std::string img_name = std::filesystem::path(img_bin).filename().string();
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto& y = d.labels[i];
    csv += detail::fmt(y.y1) + "," + std::to_string(y.y2) + "," + detail::fmt(y.y3) + "," +
           std::to_string(y.y4);
    if (d.images) {
      csv += "," + img_name + "," + std::to_string(i);
    } else {
      const auto c = static_cast<Eigen::Index>(i);
      for (Eigen::Index k = 0; k < d.left.rows(); ++k) csv += "," + detail::fmt(d.left(k, c));
      for (Eigen::Index k = 0; k < d.right.rows(); ++k) csv += "," + detail::fmt(d.right(k, c));
    }
    csv += "\n";
  }
  auto dump = [](const std::string& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + p);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + p);
  };
  dump(path, csv);

  nlohmann::json meta = {{"n", d.n()},
                         {"seed", d.seed},
                         {"generator_version", d.generator},
                         {"options", d.options}};
  if (d.images) {
    const auto& im = *d.images;
    std::string bin;
    bin.reserve(im.left.size() * 8);
    const std::size_t p = im.pixels();
    for (std::size_t i = 0; i < d.n(); ++i) {
      for (std::size_t k = 0; k < p; ++k) detail::put_f32(bin, im.left[i * p + k]);
      for (std::size_t k = 0; k < p; ++k) detail::put_f32(bin, im.right[i * p + k]);
    }
    dump(img_bin, bin);
    meta["height"] = im.height;
    meta["width"] = im.width;
    meta["channels"] = 2;
    meta["layout"] = "sample-major; per sample left then right image; row-major pixels";
    meta["dtype"] = "float32-le";
    meta["payload_bytes"] = bin.size();
    dump(detail::sidecar(path, ".images.json"), meta.dump(2) + "\n");
  }
  if (d.latent) {
    nlohmann::json truth = meta;
    truth["latent_spec"] = to_json(*d.latent);
    truth["implied_params"] = copula::to_json(implied_params(*d.latent));
    dump(detail::sidecar(path, ".truth.json"), truth.dump(2) + "\n");
  }
}

inline Dataset read_dataset(const std::string& path) {
  const std::string text = detail::read_file(path);
  detail::CsvCursor cur(text);
  const std::string header = cur.header_line();
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  if (cols.size() < 4 || cols[0] != "y1" || cols[1] != "y2" || cols[2] != "y3" || cols[3] != "y4") {
    throw ParseError("csv: header must start with y1,y2,y3,y4", 0);
  }
  const bool has_images = cols.size() == 6 && cols[4] == "image_file";
  const std::size_t nfeat = has_images ? 0 : cols.size() - 4;
  if (!has_images && nfeat % 2 != 0) throw ParseError("csv: feature columns must pair up", 0);
  const std::size_t d0 = nfeat / 2;

  Dataset d;
  std::vector<double> feats;
  std::string image_file;
  while (!cur.at_end()) {
    copula::MixedLabel y;
    const bool only_labels = has_images ? false : nfeat == 0;
    y.y1 = cur.number(false);
    std::size_t at = cur.pos();
    y.y2 = detail::binary_label(cur.number(false), at);
    y.y3 = cur.number(false);
    at = cur.pos();
    y.y4 = detail::binary_label(cur.number(only_labels), at);
    if (has_images) {
      image_file = cur.token(false);
      at = cur.pos();
      const double idx = cur.number(true);
      if (idx != static_cast<double>(d.labels.size())) {
        throw ParseError("csv: image_index out of sequence", at);
      }
    } else {
      for (std::size_t k = 0; k < nfeat; ++k) feats.push_back(cur.number(k + 1 == nfeat));
    }
    d.labels.push_back(y);
  }
  const std::size_t n = d.labels.size();
  if (!has_images) {
    d.left.resize(static_cast<Eigen::Index>(d0), static_cast<Eigen::Index>(n));
    d.right.resize(static_cast<Eigen::Index>(d0), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d0; ++k) {
        d.left(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = feats[i * nfeat + k];
        d.right(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
            feats[i * nfeat + d0 + k];
      }
    }
  }

  auto parse_json = [](const std::string& p) {
    const std::string t = detail::read_file(p);
    try {
      return nlohmann::json::parse(t);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(p + ": " + e.what(), e.byte);
    }
  };

  if (has_images) {
    const std::string meta_path = detail::sidecar(path, ".images.json");
    const auto meta = parse_json(meta_path);
    ImageSet im;
    std::size_t mn = 0;
    try {
      im.height = meta.at("height").get<int>();
      im.width = meta.at("width").get<int>();
      mn = meta.at("n").get<std::size_t>();
      d.seed = meta.at("seed").get<std::uint64_t>();
      d.generator = meta.at("generator_version").get<std::string>();
      d.options = meta.value("options", nlohmann::json::object());
      if (meta.value("dtype", std::string()) != "float32-le") {
        throw ParseError(meta_path + ": unsupported dtype", 0);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(meta_path + ": " + e.what(), 0);
    }
    if (mn != n) {
      throw ParseError("image sidecar says n=" + std::to_string(mn) + " but table has " +
                           std::to_string(n) + " rows",
                       0);
    }
    const std::string bin_path =
        (std::filesystem::path(path).parent_path() / image_file).string();
    const std::string bin = detail::read_file(bin_path);
    const std::size_t p = static_cast<std::size_t>(im.height) * im.width;
    const std::size_t expect = n * 2 * p * 4;
    if (bin.size() != expect) {
      throw ParseError(bin_path + ": expected " + std::to_string(expect) + " bytes, found " +
                           std::to_string(bin.size()),
                       std::min(bin.size(), expect));
    }
    im.left.resize(n * p);
    im.right.resize(n * p);
    for (std::size_t i = 0; i < n; ++i) {
      const char* base = bin.data() + i * 2 * p * 4;
      for (std::size_t k = 0; k < p; ++k) im.left[i * p + k] = detail::get_f32(base + 4 * k);
      for (std::size_t k = 0; k < p; ++k) im.right[i * p + k] = detail::get_f32(base + 4 * (p + k));
    }
    d.images = std::move(im);
  }

  const std::string truth_path = detail::sidecar(path, ".truth.json");
  if (std::filesystem::exists(truth_path)) {
    const auto truth = parse_json(truth_path);
    try {
      d.seed = truth.at("seed").get<std::uint64_t>();
      d.generator = truth.at("generator_version").get<std::string>();
      d.options = truth.value("options", nlohmann::json::object());
      d.latent = latent_spec_from_json(truth.at("latent_spec"));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(truth_path + ": " + e.what(), 0);
    } catch (const ConfigError& e) {
      throw ParseError(truth_path + ": " + e.what(), 0);
    }
  }
  return d;
}

}  // namespace cevit::synthgen
