#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "cevit/normals.hpp"
#include "oracles.hpp"

using namespace cevit::normals;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST(StdPdf, KnownValues) {
  EXPECT_DOUBLE_EQ(std_pdf(0.0), 0.3989422804014327);
  EXPECT_NEAR(std_pdf(1.0), 0.24197072451914337, 1e-17);
  for (double x : {0.3, 1.7, 4.2}) EXPECT_EQ(std_pdf(x), std_pdf(-x));
}

TEST(StdCdf, KnownValuesAndLimits) {
  EXPECT_EQ(std_cdf(0.0), 0.5);
  EXPECT_NEAR(std_cdf(1.959963984540054), 0.975, 1e-15);
  EXPECT_EQ(std_cdf(kInf), 1.0);
  EXPECT_EQ(std_cdf(-kInf), 0.0);
}

TEST(StdCdf, MatchesExtendedPrecisionAndIsMonotone) {
  double prev = 0.0;
  for (double x = -9.0; x <= 9.0; x += 0.01) {
    const double p = std_cdf(x);
    EXPECT_NEAR(p, static_cast<double>(cevit::oracle::cdf_ld(x)), 1e-15) << x;
    EXPECT_GE(p, prev);
    prev = p;
  }
}

TEST(StdQuantile, KnownValues) {
  EXPECT_NEAR(std_quantile(0.5), 0.0, 1e-16);
  EXPECT_NEAR(std_quantile(0.975), 1.959963984540054, 1e-14);
}

TEST(StdQuantile, InvertsCdf) {
  for (double p = 1e-12; p < 1.0; p = p < 0.01 ? p * 3.0 : p + 0.0037) {
    EXPECT_LE(std::abs(std_cdf(std_quantile(p)) - p), 1e-12) << p;
  }
  for (double x = -6.0; x <= 6.0; x += 0.05) {
    // Above ~5.3, rounding Phi(x) to the nearest double near 1 already moves the
    // preimage by more than 1e-10; allow that conditioning term on top.
    const double cond = x > 0 ? std::numeric_limits<double>::epsilon() / std_pdf(x) : 0.0;
    EXPECT_NEAR(std_quantile(std_cdf(x)), x, 1e-10 + cond) << x;
  }
}

TEST(StdQuantile, RejectsOutsideUnitInterval) {
  EXPECT_THROW(std_quantile(0.0), cevit::DomainError);
  EXPECT_THROW(std_quantile(1.0), cevit::DomainError);
  EXPECT_THROW(std_quantile(-0.2), cevit::DomainError);
  EXPECT_THROW(std_quantile(std::nan("")), cevit::DomainError);
}

TEST(BvnCdf, ClosedForms) {
  EXPECT_NEAR(bvn_cdf(0, 0, 0), 0.25, 1e-16);
  EXPECT_NEAR(bvn_cdf(0, 0, 0.5), 1.0 / 3.0, 1e-15);
  for (double r : {-0.999, -0.95, -0.6, -0.2, 0.1, 0.5, 0.8, 0.93, 0.999}) {
    EXPECT_NEAR(bvn_cdf(0, 0, r), 0.25 + std::asin(r) / (2 * std::numbers::pi), 1e-12) << r;
  }
}

TEST(BvnCdf, MatchesQuadratureOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lim(-4.0, 4.0);
  std::uniform_real_distribution<double> cor(-0.999, 0.999);
  for (int i = 0; i < 400; ++i) {
    const double h = lim(rng), k = lim(rng);
    const double r = (i % 10 == 0) ? (i % 20 == 0 ? 0.999 : -0.999) : cor(rng);
    const double expect = static_cast<double>(cevit::oracle::bvn_cdf(h, k, r));
    EXPECT_NEAR(bvn_cdf(h, k, r), expect, 1e-10) << h << " " << k << " " << r;
  }
}

TEST(BvnCdf, SymmetryBoundsReflectionLimits) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lim(-5.0, 5.0);
  std::uniform_real_distribution<double> cor(-0.99, 0.99);
  for (int i = 0; i < 2000; ++i) {
    const double h = lim(rng), k = lim(rng), r = cor(rng);
    const double p = bvn_cdf(h, k, r);
    EXPECT_NEAR(p, bvn_cdf(k, h, r), 1e-15);
    EXPECT_GE(p, std::max(0.0, std_cdf(h) + std_cdf(k) - 1.0) - 1e-15);
    EXPECT_LE(p, std::min(std_cdf(h), std_cdf(k)) + 1e-15);
    EXPECT_NEAR(p + bvn_cdf(h, -k, -r), std_cdf(h), 1e-10);
    EXPECT_LE(p, bvn_cdf(h + 0.1, k, r) + 1e-16);
    EXPECT_LE(p, bvn_cdf(h, k + 0.1, r) + 1e-16);
    EXPECT_NEAR(bvn_cdf(h, kInf, r), std_cdf(h), 1e-12);
  }
  EXPECT_EQ(bvn_cdf(1.0, -kInf, 0.3), 0.0);
}

TEST(BvnCdf, RejectsDegenerateCorrelation) {
  EXPECT_THROW(bvn_cdf(0, 0, 1.0), cevit::DomainError);
  EXPECT_THROW(bvn_cdf(0, 0, -1.2), cevit::DomainError);
  EXPECT_THROW(bvn_cdf_partials(0, 0, 1.0), cevit::DomainError);
}

TEST(BvnCdfGeneral, Standardizes) {
  EXPECT_NEAR(bvn_cdf_general(1.5, -2.0, 1.5, -2.0, 1, 0, 1), 0.25, 1e-16);
  EXPECT_NEAR(bvn_cdf_general(3.0 + 2.0, 1.0, 3.0, 1.0, 4, 0, 1), std_cdf(1.0) * std_cdf(0.0),
              1e-15);
  // rho = 0.999 with unequal scales.
  const double v11 = 2.25, v22 = 0.49, v12 = 0.999 * 1.5 * 0.7;
  const double x1 = 0.4, x2 = -0.1, m1 = 0.2, m2 = 0.1;
  const double expect = static_cast<double>(
      cevit::oracle::bvn_cdf((x1 - m1) / 1.5, (x2 - m2) / 0.7, 0.999L));
  EXPECT_NEAR(bvn_cdf_general(x1, x2, m1, m2, v11, v12, v22), expect, 1e-8);
  EXPECT_THROW(bvn_cdf_general(0, 0, 0, 0, 1, 1, 1), cevit::DomainError);
  EXPECT_THROW(bvn_cdf_general(0, 0, 0, 0, -1, 0, 1), cevit::DomainError);
}

TEST(BvnPartials, ClosedFormsAndFiniteDifferences) {
  const auto p0 = bvn_cdf_partials(0, 0, 0);
  EXPECT_NEAR(p0.dh, 0.19947114020071635, 1e-16);
  EXPECT_NEAR(p0.dk, 0.19947114020071635, 1e-16);
  const auto p5 = bvn_cdf_partials(0, 0, 0.5);
  EXPECT_NEAR(p5.dh, 0.19947114020071635, 1e-16);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lim(-3.0, 3.0);
  std::uniform_real_distribution<double> cor(-0.95, 0.95);
  for (int i = 0; i < 500; ++i) {
    const double h = lim(rng), k = lim(rng), r = cor(rng);
    const auto g = bvn_cdf_partials(h, k, r);
    const double fdh = cevit::oracle::derivative([&](double x) { return bvn_cdf(x, k, r); }, h);
    const double fdk = cevit::oracle::derivative([&](double x) { return bvn_cdf(h, x, r); }, k);
    EXPECT_NEAR(g.dh, fdh, 1e-7);
    EXPECT_NEAR(g.dk, fdk, 1e-7);

    const auto hs = bvn_cdf_hessian(h, k, r);
    const double fhh =
        cevit::oracle::derivative([&](double x) { return bvn_cdf_partials(x, k, r).dh; }, h);
    const double fhk =
        cevit::oracle::derivative([&](double x) { return bvn_cdf_partials(h, x, r).dh; }, k);
    EXPECT_NEAR(hs.hh, fhh, 1e-7);
    EXPECT_NEAR(hs.hk, fhk, 1e-7);
  }
}

TEST(BvnCdf, RelativeAccuracyInDeepTail) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> lim(-9.0, 9.0);
  std::uniform_real_distribution<double> cor(-0.95, 0.95);
  int checked = 0;
  for (int i = 0; i < 600; ++i) {
    const double h = lim(rng), k = lim(rng), r = cor(rng);
    const long double expect = cevit::oracle::bvn_cdf(h, k, r);
    if (expect <= 0.0L || expect > 1e-6L) continue;
    ++checked;
    EXPECT_NEAR(bvn_cdf(h, k, r) / static_cast<double>(expect), 1.0, 1e-9)
        << h << " " << k << " " << r;
  }
  EXPECT_GT(checked, 50);
}
