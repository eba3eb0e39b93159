#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "cevit/estimator.hpp"
#include "cevit/synthgen.hpp"

using namespace cevit;
using namespace cevit::synthgen;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("cevit_synth_" + name);
  std::filesystem::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

LatentModelSpec correlated_spec() {
  LatentModelSpec s;
  s.d0 = 3;
  s.beta[0] = Vector::Zero(3);
  s.beta[0] << 0.6, 0.8, 0.0;
  s.beta[1] = Vector::Zero(3);
  s.beta[1] << 0.5, -1.0, 0.7;
  s.beta[2] = Vector::Zero(3);
  s.beta[2] << 0.0, 0.6, 0.8;
  s.beta[3] = Vector::Zero(3);
  s.beta[3] << -0.4, 0.3, 1.1;
  s.sigma_1a = 1.2;
  s.sigma_2a = 0.8;
  s.block_corr << 1.0, 0.4, 0.5, 0.2,
                  0.4, 1.0, 0.3, 0.5,
                  0.5, 0.3, 1.0, 0.4,
                  0.2, 0.5, 0.4, 1.0;
  s.sigma_eps << 0.5, 0.0, 0.0, 0.7;
  return s;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Mean and 3-standard-error half width.
std::pair<double, double> mean_3se(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, 3.0 * std::sqrt(ss / (v.size() - 1) / v.size())};
}

}  // namespace

TEST(BlockImages, PixelLawAndBalancedLabels) {
  BlockImageOptions opt;
  opt.block_size = 3;
  const std::size_t n = 10000;
  const auto d = gen_block_images(n, 2024, opt);
  ASSERT_TRUE(d.has_images());
  const auto& im = *d.images;
  EXPECT_EQ(im.height, 9);
  EXPECT_EQ(im.width, 9);
  std::vector<double> bright, dark, prod, y2, y4;
  double sl = 0, sr = 0, sll = 0, srr = 0, slr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const float* l = im.left.data() + i * 81;
    const float* r = im.right.data() + i * 81;
    bright.push_back(l[7 * 9 + 7]);
    dark.push_back(r[4 * 9 + 1]);
    const double a = l[1], b = r[1];
    sl += a;
    sr += b;
    sll += a * a;
    srr += b * b;
    slr += a * b;
    y2.push_back(d.labels[i].y2);
    y4.push_back(d.labels[i].y4);
  }
  const auto [mb, eb] = mean_3se(bright);
  EXPECT_NEAR(mb, 0.5, std::min(0.02, eb));
  const auto [md, ed] = mean_3se(dark);
  EXPECT_NEAR(md, 0.0, ed);
  const double nn = static_cast<double>(n);
  const double corr = (slr / nn - sl / nn * sr / nn) /
                      std::sqrt((sll / nn - sl * sl / nn / nn) * (srr / nn - sr * sr / nn / nn));
  // SE of a sample correlation near 0.5 is (1 - r^2)/sqrt(n).
  EXPECT_NEAR(corr, 0.5, std::min(0.03, 3 * 0.75 / std::sqrt(nn)));
  const auto [m2, e2] = mean_3se(y2);
  const auto [m4, e4] = mean_3se(y4);
  EXPECT_NEAR(m2, 0.5, std::min(0.03, e2));
  EXPECT_NEAR(m4, 0.5, std::min(0.03, e4));
}

TEST(BlockImages, FullSizeShapeAndBrightBlock) {
  const auto d = gen_block_images(40, 7);
  const auto& im = *d.images;
  EXPECT_EQ(im.height, 72);
  EXPECT_EQ(im.width, 72);
  EXPECT_EQ(im.left.size(), 40u * 72 * 72);
  double bright = 0.0, dark = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    for (int r = 0; r < 72; ++r) {
      for (int c = 0; c < 72; ++c) {
        const double v = im.left[i * 5184 + r * 72 + c];
        (r >= 48 && c >= 48 ? bright : dark) += v;
      }
    }
  }
  bright /= 40.0 * 576;
  dark /= 40.0 * 8 * 576;
  EXPECT_NEAR(bright, 0.5, 3 * 0.5 / std::sqrt(40.0 * 576));
  EXPECT_NEAR(dark, 0.0, 3 * 0.5 / std::sqrt(40.0 * 8 * 576));
}

TEST(BlockImages, OperatorsByHand) {
  std::vector<float> img(81, 0.0f);
  // Block (1,1) top-left 3x3 gets 0.5 each; block (2,2) gets 1..9; block (3,3) 0.1 each.
  for (int k = 0; k < 3; ++k) {
    for (int l = 0; l < 3; ++l) {
      img[k * 9 + l] = 0.5f;
      img[(3 + k) * 9 + 3 + l] = static_cast<float>(1 + 3 * k + l);
      img[(6 + k) * 9 + 6 + l] = 0.1f;
    }
  }
  const auto ops = block_operators(img.data(), 3, OperatorRange::literal);
  const double expect = 9 * std::tanh(0.5) + 45.0 + std::tanh(9 * static_cast<double>(0.1f));
  EXPECT_NEAR(ops.s, expect, 1e-12);
  EXPECT_EQ(ops.s_star, 45.0);

  // With 24-pixel blocks the literal range ignores everything outside 3x3.
  std::vector<float> big(72 * 72, 0.0f);
  big[0] = 1.0f;
  big[5 * 72 + 5] = 100.0f;
  EXPECT_NEAR(block_operators(big.data(), 24, OperatorRange::literal).s, std::tanh(1.0), 1e-15);
  EXPECT_NEAR(block_operators(big.data(), 24, OperatorRange::full).s, std::tanh(1.0) + std::tanh(100.0),
              1e-15);
}

TEST(BlockImages, DeterministicAndIndependentOfBatchSize) {
  BlockImageOptions opt;
  opt.block_size = 3;
  const auto a = gen_block_images(50, 9, opt);
  const auto b = gen_block_images(50, 9, opt);
  const auto c = gen_block_images(20, 9, opt);
  EXPECT_EQ(a.images->left, b.images->left);
  for (std::size_t i = 0; i < 20 * 81; ++i) ASSERT_EQ(a.images->right[i], c.images->right[i]);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(a.labels[i].y1, c.labels[i].y1);
  const auto other = gen_block_images(50, 10, opt);
  EXPECT_NE(a.images->left, other.images->left);
}

TEST(LatentModel, IndependentBlocksGiveIdentityCopula) {
  auto s = correlated_spec();
  s.block_corr.setIdentity();
  const auto p = implied_params(s);
  EXPECT_TRUE(p.gamma.isApprox(Eigen::Matrix4d::Identity(), 1e-15));
  EXPECT_NEAR(p.sigma1, std::sqrt(1.2 * 1.2 + 0.5), 1e-14);  // |beta1| = 1
  EXPECT_NEAR(p.sigma2, std::sqrt(0.8 * 0.8 + 0.7), 1e-14);
}

TEST(LatentModel, RejectsInvalidSpecs) {
  auto s = correlated_spec();
  s.block_corr(0, 2) = s.block_corr(2, 0) = 1.5;
  EXPECT_THROW(implied_params(s), ConfigError);
  EXPECT_THROW(gen_latent_model(s, 10, 1), ConfigError);
  s = correlated_spec();
  s.beta[3] = Vector::Zero(3);
  EXPECT_THROW(gen_latent_model(s, 10, 1), ConfigError);
  s = correlated_spec();
  s.beta[0] = Vector::Zero(2);
  EXPECT_THROW(gen_latent_model(s, 10, 1), ConfigError);
}

TEST(LatentModel, ResidualMomentsMatchClosedForm) {
  const auto s = correlated_spec();
  const std::size_t n = 1000000;
  const auto d = gen_latent_model(s, n, 31);
  const auto m = oracle_means(s, d.left, d.right);
  std::vector<double> e1e3(n), e1sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const double e1 = d.labels[i].y1 - m(0, c);
    const double e3 = d.labels[i].y3 - m(1, c);
    e1e3[i] = e1 * e3;
    e1sq[i] = e1 * e1;
  }
  // Cov(y1, y3 | features) = beta1' Sigma13 beta3.
  const double cov13 = 0.5 * 1.2 * 0.8 * s.beta[0].dot(s.beta[2]);
  const auto [c, ce] = mean_3se(e1e3);
  EXPECT_NEAR(c, cov13, ce);
  const auto [v, ve] = mean_3se(e1sq);
  EXPECT_NEAR(v, 1.2 * 1.2 + 0.5, ve);
}

TEST(LatentModel, BinaryMarginsAndCrossMomentsMatchImpliedCopula) {
  const auto s = correlated_spec();
  const auto p = implied_params(s);
  const std::size_t n = 400000;
  const auto d = gen_latent_model(s, n, 77);
  const auto m = oracle_means(s, d.left, d.right);
  // E[y2 - Phi(q1)] = 0; E[e1 (y2 - Phi(q1))] = sigma1 rho13 E[phi(q1)], and so on.
  std::vector<double> r2(n), r4(n), x13(n), x14(n), x23(n), x24(n), x34(n);
  double phi1 = 0.0, phi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const auto& y = d.labels[i];
    const double e1 = y.y1 - m(0, c), e3 = y.y3 - m(1, c);
    const double q1 = m(2, c), q2 = m(3, c);
    r2[i] = y.y2 - normals::std_cdf(q1);
    r4[i] = y.y4 - normals::std_cdf(q2);
    x13[i] = e1 * r2[i] / p.sigma1;
    x14[i] = e1 * r4[i] / p.sigma1;
    x23[i] = e3 * r2[i] / p.sigma2;
    x24[i] = e3 * r4[i] / p.sigma2;
    x34[i] = y.y2 * y.y4 - normals::bvn_cdf(q1, q2, p.gamma(2, 3));
    phi1 += normals::std_pdf(q1) / n;
    phi2 += normals::std_pdf(q2) / n;
  }
  for (auto* v : {&r2, &r4, &x34}) {
    const auto [mu, se] = mean_3se(*v);
    EXPECT_NEAR(mu, 0.0, se);
  }
  auto check = [&](const std::vector<double>& v, double expect) {
    const auto [mu, se] = mean_3se(v);
    EXPECT_NEAR(mu, expect, se);
  };
  check(x13, p.gamma(0, 2) * phi1);
  check(x14, p.gamma(0, 3) * phi2);
  check(x23, p.gamma(1, 2) * phi1);
  check(x24, p.gamma(1, 3) * phi2);
  EXPECT_NE(p.gamma(0, 2), 0.0);
  EXPECT_NE(p.gamma(2, 3), 0.0);
}

TEST(LatentModel, EstimatorRecoversScalesAndRho12FromOracleResiduals) {
  const auto s = correlated_spec();
  const auto truth = implied_params(s);
  const std::size_t n = 100000;
  const auto d = gen_latent_model(s, n, 5);
  const auto m = oracle_means(s, d.left, d.right);
  estimator::WarmupOutputs w;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    w.e1.push_back(d.labels[i].y1 - m(0, c));
    w.e2.push_back(d.labels[i].y3 - m(1, c));
    w.qhat1.push_back(m(2, c));
    w.qhat2.push_back(m(3, c));
  }
  const auto est = estimator::estimate_empirical(w);
  EXPECT_NEAR(est.sigma1 / truth.sigma1, 1.0, 0.02);
  EXPECT_NEAR(est.sigma2 / truth.sigma2, 1.0, 0.02);
  EXPECT_NEAR(est.gamma(0, 1), truth.gamma(0, 1), 0.015);
}

TEST(LatentModel, DeterministicBytes) {
  const auto s = correlated_spec();
  const auto dir = temp_dir("det");
  write_dataset(dir + "/a.csv", gen_latent_model(s, 300, 4));
  write_dataset(dir + "/b.csv", gen_latent_model(s, 300, 4));
  EXPECT_EQ(slurp(dir + "/a.csv"), slurp(dir + "/b.csv"));
  EXPECT_EQ(slurp(dir + "/a.truth.json"), slurp(dir + "/b.truth.json"));
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, LatentRoundTripIsExact) {
  const auto s = correlated_spec();
  const auto d = gen_latent_model(s, 200, 12);
  const auto dir = temp_dir("latent");
  write_dataset(dir + "/data.csv", d);
  const auto back = read_dataset(dir + "/data.csv");
  ASSERT_EQ(back.n(), d.n());
  EXPECT_EQ(back.left, d.left);
  EXPECT_EQ(back.right, d.right);
  for (std::size_t i = 0; i < d.n(); ++i) {
    EXPECT_EQ(back.labels[i].y1, d.labels[i].y1);
    EXPECT_EQ(back.labels[i].y2, d.labels[i].y2);
    EXPECT_EQ(back.labels[i].y3, d.labels[i].y3);
    EXPECT_EQ(back.labels[i].y4, d.labels[i].y4);
  }
  ASSERT_TRUE(back.latent.has_value());
  EXPECT_EQ(implied_params(*back.latent).gamma, implied_params(s).gamma);
  EXPECT_EQ(back.seed, 12u);
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, ImageRoundTripIsBitwise) {
  BlockImageOptions opt;
  opt.block_size = 4;
  const auto d = gen_block_images(30, 3, opt);
  const auto dir = temp_dir("img");
  write_dataset(dir + "/img.csv", d);
  const auto back = read_dataset(dir + "/img.csv");
  ASSERT_TRUE(back.has_images());
  EXPECT_EQ(back.images->height, 12);
  EXPECT_EQ(std::memcmp(back.images->left.data(), d.images->left.data(), d.images->left.size() * 4), 0);
  EXPECT_EQ(std::memcmp(back.images->right.data(), d.images->right.data(), d.images->right.size() * 4), 0);
  EXPECT_EQ(back.labels[29].y1, d.labels[29].y1);
  EXPECT_EQ(back.input(0), d.input(0));
  EXPECT_EQ(back.options["block_size"], 4);
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, CorruptionIsReported) {
  BlockImageOptions opt;
  opt.block_size = 3;
  const auto d = gen_block_images(10, 3, opt);
  const auto dir = temp_dir("bad");
  const std::string csv = dir + "/x.csv";
  write_dataset(csv, d);

  // Truncated payload.
  const std::string bin = dir + "/x.images.bin";
  const std::string bytes = slurp(bin);
  std::filesystem::resize_file(bin, bytes.size() - 10);
  try {
    read_dataset(csv);
    FAIL();
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected " + std::to_string(bytes.size())), std::string::npos) << msg;
    EXPECT_NE(msg.find("found " + std::to_string(bytes.size() - 10)), std::string::npos) << msg;
  }
  { std::ofstream(bin, std::ios::binary | std::ios::trunc) << bytes; }
  EXPECT_NO_THROW(read_dataset(csv));

  // Sidecar disagrees with the table.
  const std::string meta = dir + "/x.images.json";
  std::string mtext = slurp(meta);
  const auto pos = mtext.find("\"n\": 10");
  ASSERT_NE(pos, std::string::npos);
  std::string changed = mtext;
  changed.replace(pos, 7, "\"n\": 11");
  { std::ofstream(meta, std::ios::trunc) << changed; }
  EXPECT_THROW(read_dataset(csv), ParseError);
  { std::ofstream(meta, std::ios::trunc) << mtext; }

  // Malformed number in the table: offset points at it.
  std::string table = slurp(csv);
  const auto line2 = table.find('\n') + 1;
  table[line2] = 'x';
  { std::ofstream(csv, std::ios::binary | std::ios::trunc) << table; }
  try {
    read_dataset(csv);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), line2);
  }
  // Non-binary label.
  table = "y1,y2,y3,y4\n1.5,2,0.3,1\n";
  { std::ofstream(csv, std::ios::binary | std::ios::trunc) << table; }
  try {
    read_dataset(csv);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 16u);
  }
  std::filesystem::remove_all(dir);
  EXPECT_THROW(read_dataset(csv), IoError);
}
