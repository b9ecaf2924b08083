#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "cmr/analysis.hpp"
#include "cmr/error.hpp"
#include "cmr/trace_store.hpp"

namespace {

using cmr::Vector;

TEST(Snr, ExactReconstructionIsInfinite) {
  const Vector d = Vector::LinSpaced(5, 1, 5);
  EXPECT_EQ(cmr::snr_db(d, d), std::numeric_limits<double>::infinity());
}

TEST(Snr, EqualPowersGiveZeroDb) {
  const Vector d = (Vector(2) << 1, 0).finished();
  EXPECT_DOUBLE_EQ(cmr::snr_db(d, Vector::Zero(2)), 0.0);
}

TEST(Snr, MatchesFormula) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Vector d(20), e(20);
  for (Eigen::Index i = 0; i < 20; ++i) {
    d(i) = g(rng);
    e(i) = d(i) + 0.1 * g(rng);
  }
  double s = 0, n = 0;
  for (Eigen::Index i = 0; i < 20; ++i) {
    s += d(i) * d(i);
    n += (d(i) - e(i)) * (d(i) - e(i));
  }
  EXPECT_NEAR(cmr::snr_db(d, e), 10 * std::log10(s / n), 1e-12);
  EXPECT_NEAR(cmr::snr_db(d, e), cmr::snr_db(Vector(3.7 * d), Vector(3.7 * e)), 1e-10);
}

TEST(Snr, ZeroSignalIsAnError) {
  EXPECT_THROW(cmr::snr_db(Vector::Zero(3), Vector::Ones(3)), cmr::InputError);
}

TEST(Pearson, DefinitionAndDegenerateCases) {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8.5}, flat{3, 3, 3, 3};
  double ma = 2.5, mb = (2 + 4 + 6 + 8.5) / 4, sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  EXPECT_NEAR(*cmr::pearson(a, b), sab / std::sqrt(saa * sbb), 1e-14);
  EXPECT_FALSE(cmr::pearson(a, flat).has_value());
}

TEST(Correlation, LinearShiftIsPerfect) {
  cmr::Matrix r(3, 4);
  r << 1, 5, 2, 8, 3, 7, 4, 10, 6, 10, 7, 13;
  const cmr::ReadingTrace t({1, 2, 3, 4}, r);
  for (const auto& v : cmr::round_correlation(t)) EXPECT_NEAR(*v, 1.0, 1e-12);
}

TEST(Correlation, IdenticalRoundsGiveUndefinedIncrements) {
  cmr::Matrix r(3, 3);
  r << 1, 2, 3, 1, 2, 3, 1, 2, 3;
  const cmr::ReadingTrace t({1, 2, 3}, r);
  for (const auto& v : cmr::increment_correlation(t)) EXPECT_FALSE(v.has_value());
  EXPECT_TRUE(cmr::defined_values(cmr::increment_correlation(t)).empty());
}

TEST(Correlation, SyntheticTraceCalibrated) {
  cmr::SynthesisParams p;
  const auto r = cmr::defined_values(cmr::round_correlation(cmr::synthesize_trace(p)));
  EXPECT_GE(cmr::boxplot_stats(r).median, 0.999);
}

TEST(Boxplot, SimpleCases) {
  const std::vector<double> v{5, 3, 1, 4, 2};
  const auto s = cmr::boxplot_stats(v);
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.q1, 2);
  EXPECT_EQ(s.median, 3);
  EXPECT_EQ(s.q3, 4);
  EXPECT_EQ(s.max, 5);
  const std::vector<double> one{7.5};
  const auto o = cmr::boxplot_stats(one);
  EXPECT_EQ(o.min, 7.5);
  EXPECT_EQ(o.q1, 7.5);
  EXPECT_EQ(o.max, 7.5);
  EXPECT_THROW(cmr::boxplot_stats(std::vector<double>{}), cmr::InputError);
}

TEST(Boxplot, MatchesSortedIndexRule) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> v(20);
    for (auto& x : v) x = g(rng);
    auto s = v;
    std::sort(s.begin(), s.end());
    const auto q = [&s](double p) {
      const double pos = p * 19.0;
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const double frac = pos - static_cast<double>(lo);
      return lo + 1 < s.size() ? s[lo] + frac * (s[lo + 1] - s[lo]) : s[lo];
    };
    const auto b = cmr::boxplot_stats(v);
    EXPECT_NEAR(b.q1, q(0.25), 1e-14);
    EXPECT_NEAR(b.median, q(0.5), 1e-14);
    EXPECT_NEAR(b.q3, q(0.75), 1e-14);
    EXPECT_LE(b.min, b.q1);
    EXPECT_LE(b.q1, b.median);
    EXPECT_LE(b.median, b.q3);
    EXPECT_LE(b.q3, b.max);
  }
}

TEST(Slope, LeastSquares) {
  const std::vector<double> v{1, 3, 5, 7};
  EXPECT_NEAR(cmr::ls_slope(v), 2.0, 1e-14);
  const std::vector<double> c{4, 4, 4};
  EXPECT_EQ(cmr::ls_slope(c), 0.0);
  EXPECT_NEAR(cmr::mean(v), 4.0, 1e-15);
}

}  // namespace
