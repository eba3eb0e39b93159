#pragma once

// Bi-channel predictor: one encoder shared by both covariate groups, one base
// head shared by both channels, and a small bottleneck adapter per channel.
// Left channel produces (m1, q1), right channel (m2, q2).
//
// Batches are column-major: one sample per column.

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cevit/copula.hpp"
#include "cevit/error.hpp"
#include "cevit/normals.hpp"

namespace cevit::model {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Means = Eigen::Matrix<double, 4, Eigen::Dynamic>;  // rows m1, m2, q1, q2

inline double gelu(double x) { return x * normals::std_cdf(x); }
inline double gelu_grad(double x) { return normals::std_cdf(x) + x * normals::std_pdf(x); }

enum class EncoderKind { identity, linear, mlp };

inline std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::identity: return "identity";
    case EncoderKind::linear: return "linear";
    case EncoderKind::mlp: return "mlp";
  }
  return "?";
}

inline EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "identity") return EncoderKind::identity;
  if (s == "linear") return EncoderKind::linear;
  if (s == "mlp") return EncoderKind::mlp;
  throw ConfigError("unknown encoder kind '" + s + "'");
}

struct EncoderSpec {
  EncoderKind kind = EncoderKind::linear;
  int input_dim = 1;
  std::vector<int> hidden_dims;  // mlp only
  int output_dim = 1;            // representation width d0
};

struct HeadSpec {
  int adapter_rank = 1;
  double adapter_scale = 0.1;
};

struct ModelSpec {
  EncoderSpec encoder;
  HeadSpec head;
};

inline void check_spec(const ModelSpec& s) {
  const auto& e = s.encoder;
  if (e.input_dim < 1 || e.output_dim < 1) throw ConfigError("model: dims must be positive");
  for (int h : e.hidden_dims) {
    if (h < 1) throw ConfigError("model: hidden dims must be positive");
  }
  if (e.kind == EncoderKind::identity && e.input_dim != e.output_dim) {
    throw ConfigError("model: identity encoder needs input_dim == output_dim");
  }
  if (e.kind != EncoderKind::mlp && !e.hidden_dims.empty()) {
    throw ConfigError("model: hidden_dims only apply to the mlp encoder");
  }
  if (s.head.adapter_rank < 1) throw ConfigError("model: adapter_rank must be >= 1");
  if (!(s.head.adapter_scale >= 0.0) || !std::isfinite(s.head.adapter_scale)) {
    throw ConfigError("model: adapter_scale must be finite and >= 0");
  }
}

inline nlohmann::json to_json(const ModelSpec& s) {
  return {{"encoder",
           {{"kind", to_string(s.encoder.kind)},
            {"input_dim", s.encoder.input_dim},
            {"hidden_dims", s.encoder.hidden_dims},
            {"output_dim", s.encoder.output_dim}}},
          {"head", {{"adapter_rank", s.head.adapter_rank}, {"adapter_scale", s.head.adapter_scale}}}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    const auto& e = j.at("encoder");
    s.encoder.kind = encoder_kind_from_string(e.at("kind").get<std::string>());
    s.encoder.input_dim = e.at("input_dim").get<int>();
    s.encoder.hidden_dims = e.value("hidden_dims", std::vector<int>{});
    s.encoder.output_dim = e.at("output_dim").get<int>();
    if (j.contains("head")) {
      s.head.adapter_rank = j["head"].value("adapter_rank", 1);
      s.head.adapter_scale = j["head"].value("adapter_scale", 0.1);
    }
    check_spec(s);
    return s;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("model spec: ") + ex.what());
  }
}

/// Offset and shape of one weight block inside the flat parameter vector.
struct Block {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

class BiChannelModel {
 public:
  BiChannelModel() = default;

  BiChannelModel(const ModelSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
    check_spec(spec_);
    layout();
    init(seed);
  }

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  int input_dim() const { return spec_.encoder.input_dim; }
  int rep_dim() const { return spec_.encoder.output_dim; }

  Vector& params() { return theta_; }
  const Vector& params() const { return theta_; }
  Eigen::Index num_params() const { return theta_.size(); }

  /// Encoder parameters are the prefix [0, encoder_size()).
  Eigen::Index encoder_size() const { return enc_size_; }

  bool frozen() const { return frozen_; }
  void freeze_encoder(bool on) { frozen_ = on; }

  Eigen::Map<Matrix> block(const Block& b) { return {theta_.data() + b.offset, b.rows, b.cols}; }
  Eigen::Map<const Matrix> block(const Block& b) const {
    return {theta_.data() + b.offset, b.rows, b.cols};
  }

  const std::vector<Block>& encoder_weights() const { return enc_w_; }
  const std::vector<Block>& encoder_biases() const { return enc_b_; }
  const Block& base_weight() const { return base_w_; }
  const Block& base_bias() const { return base_b_; }
  const Block& adapter_down(int channel) const { return down_[channel]; }
  const Block& adapter_up(int channel) const { return up_[channel]; }

  /// Shared representation h(x) for a batch; no tape is recorded.
  Matrix encode(const Matrix& x) const {
    check_input(x);
    Matrix a = x;
    for (std::size_t l = 0; l < enc_w_.size(); ++l) {
      Matrix z = block(enc_w_[l]) * a;
      z.colwise() += Vector(block(enc_b_[l]));
      a = z.unaryExpr(&gelu);
    }
    return a;
  }

  /// Batch forward. Records a tape for backward().
  Means forward(const Matrix& x_left, const Matrix& x_right) {
    check_input(x_left);
    check_input(x_right);
    if (x_left.cols() != x_right.cols()) throw UsageError("forward: batch sizes differ");
    tape_.emplace();
    Means out(4, x_left.cols());
    const Matrix left = run_channel(0, x_left, &tape_->ch[0]);
    const Matrix right = run_channel(1, x_right, &tape_->ch[1]);
    out.row(0) = left.row(0);
    out.row(2) = left.row(1);
    out.row(1) = right.row(0);
    out.row(3) = right.row(1);
    return out;
  }

  /// Forward without recording a tape; safe to call concurrently.
  Means predict(const Matrix& x_left, const Matrix& x_right) const {
    check_input(x_left);
    check_input(x_right);
    if (x_left.cols() != x_right.cols()) throw UsageError("predict: batch sizes differ");
    Means out(4, x_left.cols());
    const Matrix left = run_channel(0, x_left, nullptr);
    const Matrix right = run_channel(1, x_right, nullptr);
    out.row(0) = left.row(0);
    out.row(2) = left.row(1);
    out.row(1) = right.row(0);
    out.row(3) = right.row(1);
    return out;
  }

  copula::MarginalMeans forward_one(const Vector& x_left, const Vector& x_right) const {
    const Means m = predict(x_left, x_right);
    return {m(0, 0), m(1, 0), m(2, 0), m(3, 0)};
  }

  /// Gradient of sum_j upstream(:, j) . means(:, j) w.r.t. every parameter,
  /// using the tape of the last forward(). Encoder entries are zero when frozen.
  Vector backward(const Means& upstream) const {
    if (!tape_) throw UsageError("backward: no recorded forward pass");
    if (upstream.cols() != tape_->ch[0].x.cols()) {
      throw UsageError("backward: upstream batch size does not match the recorded forward");
    }
    Vector grad = Vector::Zero(theta_.size());
    Matrix d_left(2, upstream.cols()), d_right(2, upstream.cols());
    d_left.row(0) = upstream.row(0);
    d_left.row(1) = upstream.row(2);
    d_right.row(0) = upstream.row(1);
    d_right.row(1) = upstream.row(3);
    back_channel(0, d_left, tape_->ch[0], grad);
    back_channel(1, d_right, tape_->ch[1], grad);
    return grad;
  }

  void clear_tape() { tape_.reset(); }

  /// Per-channel coefficient rows of the base head (beta1, beta2 for the left
  /// channel, beta3, beta4 for the right). Exact description of the heads only
  /// while the adapters contribute nothing.
  std::array<Vector, 4> beta_view() const {
    const auto w = block(base_w_);
    return {Vector(w.row(0).transpose()), Vector(w.row(1).transpose()),
            Vector(w.row(0).transpose()), Vector(w.row(1).transpose())};
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    nlohmann::json header = {{"version", 1},
                             {"spec", to_json(spec_)},
                             {"seed", seed_},
                             {"num_params", theta_.size()},
                             {"frozen", frozen_}};
    f << kMagic << "\n" << header.dump() << "\n";
    for (Eigen::Index i = 0; i < theta_.size(); ++i) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(theta_[i]);
      if constexpr (std::endian::native == std::endian::big) bits = byteswap(bits);
      char buf[8];
      std::memcpy(buf, &bits, 8);
      f.write(buf, 8);
    }
    if (!f) throw IoError("failed writing checkpoint: " + path);
  }

  static BiChannelModel load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::string magic, header_line;
    std::getline(f, magic);
    if (magic != kMagic) throw ParseError("checkpoint: bad magic line", 0);
    const std::size_t header_at = magic.size() + 1;
    if (!std::getline(f, header_line)) throw ParseError("checkpoint: missing header", header_at);
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("checkpoint header: ") + e.what(), header_at + e.byte);
    }
    BiChannelModel m;
    std::size_t count = 0;
    try {
      if (header.at("version").get<int>() != 1) {
        throw ParseError("checkpoint: unsupported version", header_at);
      }
      m.spec_ = spec_from_json(header.at("spec"));
      m.seed_ = header.at("seed").get<std::uint64_t>();
      m.frozen_ = header.value("frozen", false);
      count = header.at("num_params").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("checkpoint header: ") + e.what(), header_at);
    } catch (const ConfigError& e) {
      throw ParseError(std::string("checkpoint header: ") + e.what(), header_at);
    }
    m.layout();
    if (static_cast<Eigen::Index>(count) != m.theta_.size()) {
      throw ParseError("checkpoint: parameter count does not match spec", header_at);
    }
    const std::size_t payload_at = header_at + header_line.size() + 1;
    for (std::size_t i = 0; i < count; ++i) {
      char buf[8];
      if (!f.read(buf, 8)) throw ParseError("checkpoint: truncated payload", payload_at + 8 * i);
      std::uint64_t bits;
      std::memcpy(&bits, buf, 8);
      if constexpr (std::endian::native == std::endian::big) bits = byteswap(bits);
      m.theta_[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(bits);
    }
    if (f.peek() != std::char_traits<char>::eof()) {
      throw ParseError("checkpoint: trailing bytes", payload_at + 8 * count);
    }
    return m;
  }

 private:
  static constexpr const char* kMagic = "CEVITCKPT 1";

  struct ChannelTape {
    Matrix x;
    std::vector<Matrix> z;  // encoder pre-activations
    std::vector<Matrix> a;  // encoder inputs per layer, a.back() is h
    Matrix h;
    Matrix b;  // adapter pre-activation
    Matrix g;  // adapter activation
  };
  struct Tape {
    ChannelTape ch[2];
  };

  static std::uint64_t byteswap(std::uint64_t v) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xff);
    return r;
  }

  void check_input(const Matrix& x) const {
    if (x.rows() != spec_.encoder.input_dim) {
      throw UsageError("model: input has " + std::to_string(x.rows()) + " rows, expected " +
                       std::to_string(spec_.encoder.input_dim));
    }
  }

  void layout() {
    Eigen::Index off = 0;
    auto add = [&](Eigen::Index r, Eigen::Index c) {
      Block b{off, r, c};
      off += r * c;
      return b;
    };
    enc_w_.clear();
    enc_b_.clear();
    const auto& e = spec_.encoder;
    if (e.kind != EncoderKind::identity) {
      std::vector<int> dims{e.input_dim};
      for (int h : e.hidden_dims) dims.push_back(h);
      dims.push_back(e.output_dim);
      for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        enc_w_.push_back(add(dims[l + 1], dims[l]));
        enc_b_.push_back(add(dims[l + 1], 1));
      }
    }
    enc_size_ = off;
    const int d0 = e.output_dim, r = spec_.head.adapter_rank;
    base_w_ = add(2, d0);
    base_b_ = add(2, 1);
    for (int c = 0; c < 2; ++c) {
      down_[c] = add(r, d0);
      up_[c] = add(2, r);
    }
    theta_ = Vector::Zero(off);
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    auto fill = [&](const Block& b) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(b.cols));
      auto m = block(b);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * n01(rng);
    };
    for (const auto& b : enc_w_) fill(b);
    fill(base_w_);
    for (int c = 0; c < 2; ++c) fill(down_[c]);
    // Biases and the adapter up-projections start at zero.
  }

  Matrix run_channel(int c, const Matrix& x, ChannelTape* t) const {
    Matrix a = x;
    if (t) t->x = x;
    for (std::size_t l = 0; l < enc_w_.size(); ++l) {
      Matrix z = block(enc_w_[l]) * a;
      z.colwise() += Vector(block(enc_b_[l]));
      if (t) {
        t->a.push_back(std::move(a));
        t->z.push_back(z);
      }
      a = z.unaryExpr(&gelu);
    }
    Matrix b = block(down_[c]) * a;
    Matrix g = b.unaryExpr(&gelu);
    Matrix out = block(base_w_) * a + spec_.head.adapter_scale * (block(up_[c]) * g);
    out.colwise() += Vector(block(base_b_));
    if (t) {
      t->h = std::move(a);
      t->b = std::move(b);
      t->g = std::move(g);
    }
    return out;
  }

  void back_channel(int c, const Matrix& d_out, const ChannelTape& t, Vector& grad) const {
    auto gblock = [&](const Block& b) { return Eigen::Map<Matrix>(grad.data() + b.offset, b.rows, b.cols); };
    const double s = spec_.head.adapter_scale;
    gblock(base_w_) += d_out * t.h.transpose();
    gblock(base_b_) += d_out.rowwise().sum();
    gblock(up_[c]) += s * d_out * t.g.transpose();
    const Matrix d_b =
        (s * block(up_[c]).transpose() * d_out).cwiseProduct(t.b.unaryExpr(&gelu_grad));
    gblock(down_[c]) += d_b * t.h.transpose();
    if (frozen_ || enc_w_.empty()) return;
    Matrix d_a = block(base_w_).transpose() * d_out + block(down_[c]).transpose() * d_b;
    for (std::size_t l = enc_w_.size(); l-- > 0;) {
      const Matrix d_z = d_a.cwiseProduct(t.z[l].unaryExpr(&gelu_grad));
      gblock(enc_w_[l]) += d_z * t.a[l].transpose();
      gblock(enc_b_[l]) += d_z.rowwise().sum();
      if (l > 0) d_a = block(enc_w_[l]).transpose() * d_z;
    }
  }

  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  Vector theta_;
  Eigen::Index enc_size_ = 0;
  std::vector<Block> enc_w_, enc_b_;
  Block base_w_, base_b_;
  Block down_[2], up_[2];
  bool frozen_ = false;
  std::optional<Tape> tape_;
};

}  // namespace cevit::model
