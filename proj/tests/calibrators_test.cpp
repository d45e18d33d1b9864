#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "faircal/calibrators.hpp"
#include "faircal/error.hpp"
#include "faircal/metrics.hpp"
#include "support.hpp"

namespace faircal {
namespace {

namespace oracle = testing::oracle;

TEST(RescaleScore, Examples) {
  EXPECT_DOUBLE_EQ(rescale_score(0.0), 0.5);
  EXPECT_DOUBLE_EQ(rescale_score(1.0), 1.0 - 1e-6);
  EXPECT_DOUBLE_EQ(rescale_score(-1.0), 1e-6);
  EXPECT_NEAR(rescale_score(-0.2), 0.4, 1e-15);
}

TEST(BetaMap, ApplyExamples) {
  EXPECT_NEAR(CalibrationMap::beta({1, 1, 0}).apply(0.3), 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(CalibrationMap::beta({0, 0, 0}).apply(0.17), 0.5);
  EXPECT_DOUBLE_EQ(CalibrationMap::beta({0, 0, 0}).apply(0.93), 0.5);
  EXPECT_NEAR(CalibrationMap::beta({2, 2, 0}).apply(0.5), 0.5, 1e-15);
  double expected = 1.0 / (1.0 + 1.0 / (std::exp(0.5) * 0.6 / (0.4 * 0.4)));
  EXPECT_NEAR(CalibrationMap::beta({1, 2, 0.5}).apply(0.6), expected, 1e-14);
  EXPECT_DOUBLE_EQ(CalibrationMap::identity().apply(0.42), 0.42);
}

TEST(FitBeta, SmallExampleMatchesGrid) {
  std::vector<double> s{0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75};
  std::vector<int> y{1, 0, 0, 0, 1, 1, 1, 0};
  CalibrationMap m = fit_beta(s, y);
  EXPECT_LT(std::abs(m.apply(0.25) - 0.25), 0.05);
  EXPECT_LT(std::abs(m.apply(0.75) - 0.75), 0.05);
  auto grid = oracle::beta_grid(s, y);
  EXPECT_LE(beta_log_loss(m.beta_params(), s, y), grid.loss + 1e-4);
}

TEST(FitBeta, RandomInstancesMatchGrid) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  std::uniform_real_distribution<double> pa(0.5, 3.0), pc(-1.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    BetaParams truth{pa(rng), pa(rng), pc(rng)};
    CalibrationMap true_map = CalibrationMap::beta(truth);
    std::vector<double> s(50);
    std::vector<int> y(50);
    for (int i = 0; i < 50; ++i) {
      s[i] = u(rng);
      y[i] = std::bernoulli_distribution(true_map.apply(s[i]))(rng);
    }
    if (std::count(y.begin(), y.end(), 1) < 5 || std::count(y.begin(), y.end(), 0) < 5) continue;
    CalibrationMap fit = fit_beta(s, y);
    auto grid = oracle::beta_grid(s, y);
    const auto& p = fit.beta_params();
    EXPECT_NEAR(p.a, grid.a, 0.05);
    EXPECT_NEAR(p.b, grid.b, 0.05);
    EXPECT_NEAR(p.c, grid.c, 0.05);
    EXPECT_NEAR(beta_log_loss(p, s, y), grid.loss, 1e-4);
  }
}

TEST(FitBeta, NegativeCoefficientsAreDropped) {
  // Positives concentrate at both ends, which pushes one shape parameter
  // negative in the unconstrained fit.
  std::vector<double> s{0.01, 0.02, 0.05, 0.3, 0.4, 0.5, 0.6, 0.7, 0.95, 0.99};
  std::vector<int> y{1, 1, 1, 0, 0, 0, 0, 1, 1, 1};
  CalibrationMap m = fit_beta(s, y);
  EXPECT_GE(m.beta_params().a, 0.0);
  EXPECT_GE(m.beta_params().b, 0.0);
}

TEST(FitBeta, SingleClassFails) {
  std::vector<double> s{0.2, 0.4, 0.6};
  std::vector<int> y{1, 1, 1};
  EXPECT_THROW(fit_beta(s, y), FitError);
}

TEST(FitBeta, SeparableDataStaysFinite) {
  std::vector<double> s{0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
  std::vector<int> y{0, 0, 0, 1, 1, 1};
  CalibrationMap m = fit_beta(s, y);
  EXPECT_TRUE(std::isfinite(m.beta_params().a));
  EXPECT_LT(m.apply(0.2), 0.5);
  EXPECT_GT(m.apply(0.8), 0.5);
}

TEST(FitBinning, Examples) {
  std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  std::vector<int> y{1, 0, 1, 1};
  CalibrationMap one = fit_binning(s, y, 1);
  for (double x : {0.0, 0.3, 0.99}) EXPECT_DOUBLE_EQ(one.apply(x), 0.75);

  std::vector<int> pure{0, 0, 1, 1};
  CalibrationMap two = fit_binning(s, pure, 2);
  EXPECT_DOUBLE_EQ(two.apply(0.15), 0.0);
  EXPECT_DOUBLE_EQ(two.apply(0.85), 1.0);

  EXPECT_THROW(fit_binning(s, y, 0), StructuralError);
}

TEST(FitBinning, MatchesPerBinRecount) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 5 + t % 20;
    const std::size_t m = 1 + t % std::min<std::size_t>(n, 6);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(rng);
      y[i] = u(rng) < s[i];
    }
    CalibrationMap map = fit_binning(s, y, static_cast<int>(m));
    std::vector<double> pos(m, 0.0), cnt(m, 0.0);
    std::vector<std::size_t> bin(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t rank = 0;
      for (std::size_t j = 0; j < n; ++j) rank += s[j] < s[i];
      bin[i] = oracle::equal_mass_bin(rank, n, m);
      pos[bin[i]] += y[i];
      cnt[bin[i]] += 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(map.apply(s[i]), pos[bin[i]] / cnt[bin[i]]);
  }
}

TEST(FitBinning, SelfConsistentWithTies) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(30);
    std::vector<int> y(30);
    for (int i = 0; i < 30; ++i) {
      s[i] = static_cast<double>(rng() % 6) / 6.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    CalibrationMap map = fit_binning(s, y, 4);
    // Group points by the confidence they receive; each group's mean label
    // equals that confidence.
    std::map<double, std::pair<double, double>> groups;
    for (int i = 0; i < 30; ++i) {
      auto& g = groups[map.apply(s[i])];
      g.first += y[i];
      g.second += 1.0;
    }
    for (const auto& [c, g] : groups) EXPECT_NEAR(g.first / g.second, c, 1e-15);
  }
}

TEST(FitIsotonic, Examples) {
  std::vector<double> s{1, 2, 3, 4};
  std::vector<int> sorted{0, 0, 1, 1};
  CalibrationMap m = fit_isotonic(s, sorted);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(m.apply(s[i]), sorted[i]);

  std::vector<int> ones{1, 1, 1, 1};
  CalibrationMap c = fit_isotonic(s, ones);
  for (double x : {-5.0, 1.0, 2.5, 10.0}) EXPECT_DOUBLE_EQ(c.apply(x), 1.0);

  std::vector<int> mixed{0, 1, 0, 1};
  CalibrationMap p = fit_isotonic(s, mixed);
  std::vector<double> expected{0, 0.5, 0.5, 1};
  auto grid = oracle::isotonic_grid(s, mixed);
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(p.apply(s[i]), expected[i]);
    EXPECT_NEAR(grid[i], expected[i], 1e-3);
  }
}

TEST(FitIsotonic, MatchesGridOracle) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 10) / 10.0;  // ties on purpose
      y[i] = static_cast<int>(rng() % 2);
    }
    CalibrationMap m = fit_isotonic(s, y);
    auto expected = oracle::isotonic_grid(s, y);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(m.apply(s[i]), expected[i], 1e-3);
  }
}

TEST(CalibrationMaps, MonotoneUnderRandomProbes) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(200);
  std::vector<int> y(200);
  for (int i = 0; i < 200; ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < s[i] * s[i];
  }
  for (const CalibrationMap& m : {fit_beta(s, y), fit_isotonic(s, y)}) {
    for (int t = 0; t < 10000; ++t) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      EXPECT_LE(m.apply(a), m.apply(b));
    }
  }
}

TEST(CalibrationMaps, BetaPreservesAuroc) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> s(300), c(300);
  std::vector<int> y(300);
  for (int i = 0; i < 300; ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < s[i];
  }
  CalibrationMap m = fit_beta(s, y);
  for (int i = 0; i < 300; ++i) c[i] = m.apply(s[i]);
  EXPECT_EQ(auroc(c, y), auroc(s, y));
}

TEST(CalibrationMaps, SerializationRoundTrip) {
  std::vector<double> s{0.1, 0.3, 0.35, 0.6, 0.8, 0.9};
  std::vector<int> y{0, 1, 0, 0, 1, 1};
  for (const CalibrationMap& m :
       {CalibrationMap::identity(), fit_beta(s, y), fit_binning(s, y, 3), fit_isotonic(s, y)}) {
    std::stringstream buf;
    m.serialize(buf);
    std::stringstream in(buf.str());
    CalibrationMap back = CalibrationMap::deserialize(in);
    EXPECT_EQ(back, m);
    std::stringstream again;
    back.serialize(again);
    EXPECT_EQ(again.str(), buf.str());
    EXPECT_EQ(static_cast<unsigned char>(buf.str()[0]), static_cast<unsigned char>(m.kind()));
  }
}

TEST(FitCalibrator, Dispatch) {
  std::vector<double> s{0.1, 0.3, 0.35, 0.6, 0.8, 0.9};
  std::vector<int> y{0, 1, 0, 0, 1, 1};
  EXPECT_EQ(fit_calibrator(s, y, {CalibratorKind::kBeta, 10}).kind(), CalibratorKind::kBeta);
  EXPECT_EQ(fit_calibrator(s, y, {CalibratorKind::kIsotonic, 10}).kind(), CalibratorKind::kIsotonic);
  // More bins than samples shrinks to one bin per sample.
  CalibrationMap b = fit_calibrator(s, y, {CalibratorKind::kBinning, 10});
  EXPECT_EQ(b.kind(), CalibratorKind::kBinning);
  EXPECT_EQ(b.values().size(), s.size());
  EXPECT_EQ(calibrator_from_string("isotonic"), CalibratorKind::kIsotonic);
  EXPECT_THROW(calibrator_from_string("platt"), ConfigError);
}

}  // namespace
}  // namespace faircal
