#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "meb/models/qrse.hpp"

using namespace meb;
using namespace meb::models;

TEST(QrseConditional, EntryAndExitAreComplementary) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::uniform_real_distribution<double> td(0.05, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = nd(rng), mu = nd(rng), t = td(rng);
    EXPECT_NEAR(qrse_conditional_entry(x, mu, t) + qrse_conditional_exit(x, mu, t), 1.0, 1e-15);
  }
  EXPECT_EQ(qrse_conditional_entry(1.3, 1.3, 0.7), 0.5);
  EXPECT_NEAR(qrse_conditional_entry(50.0, 0.0, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(qrse_conditional_entry(-50.0, 0.0, 1.0), 0.0, 1e-15);
  EXPECT_THROW(qrse_conditional_entry(0.0, 0.0, 0.0), InvalidArgument);
  EXPECT_THROW(qrse_conditional_entry(0.0, 0.0, -1.0), InvalidArgument);
}

TEST(QrseKernel, IndifferencePointAndSymmetry) {
  const QrseParams p{.mu = 0.4, .T = 0.8, .alpha = 0.4, .S = 1.5};
  EXPECT_NEAR(qrse_log_kernel(0.4, p), std::log(2.0), 1e-15);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> hd(0.0, 6.0);
  for (int i = 0; i < 200; ++i) {
    const double h = hd(rng);
    EXPECT_NEAR(qrse_log_kernel(0.4 + h, p), qrse_log_kernel(0.4 - h, p), 1e-13);
  }
}

TEST(QrseKernel, LowTemperatureLimit) {
  const QrseParams p{.mu = 0.0, .T = 1e-6, .alpha = 0.5, .S = 2.0};
  for (double x : {1.0, 2.5, 7.0}) EXPECT_NEAR(qrse_log_kernel(x, p), -(x - 0.5) / 2.0, 1e-6);
  // The guard clamps tiny temperatures instead of overflowing.
  const QrseParams tiny{.mu = 0.0, .T = 1e-300, .alpha = 0.0, .S = 1.0};
  EXPECT_TRUE(std::isfinite(qrse_log_kernel(3.0, tiny)));
}

TEST(QrseKernel, LipschitzInTemperature) {
  const auto grid = StateGrid::linspace(-4.0, 4.0, 161);
  double worst = 0.0;
  for (double t = 0.3; t < 3.0; t += 0.05) {
    const QrseParams a{.mu = 0.2, .T = t, .alpha = -0.3, .S = 1.0};
    QrseParams b = a;
    b.T = t + 1e-4;
    for (std::size_t k = 0; k < grid.size(); ++k)
      worst = std::max(worst, std::abs(qrse_log_kernel(grid.x(k), b) - qrse_log_kernel(grid.x(k), a)) / 1e-4);
  }
  EXPECT_TRUE(std::isfinite(worst));
  EXPECT_LT(worst, 100.0);
}

TEST(QrseDistribution, NormalizedAndSymmetric) {
  const auto grid = StateGrid::cells(-10.0, 10.0, 400);
  const QrseParams p{.mu = 0.0, .T = 0.6, .alpha = 0.0, .S = 0.6};
  const auto d = qrse_distribution(grid, p);
  double s = 0.0;
  for (double v : d.q.weights()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  for (std::size_t k = 0; k < 200; ++k) EXPECT_NEAR(d.q[k], d.q[399 - k], 1e-12);
  EXPECT_FALSE(d.truncated);
  EXPECT_NEAR(qrse_asymmetry(grid, p), 0.0, 1e-12);
}

TEST(QrseDistribution, RefinementChangesAggregatedMassesLittle) {
  const QrseParams p{.mu = 0.3, .T = 0.7, .alpha = -0.2, .S = 1.0};
  const auto coarse = qrse_distribution(StateGrid::cells(-15.0, 15.0, 3000), p);
  const auto fine = qrse_distribution(StateGrid::cells(-15.0, 15.0, 6000), p);
  for (std::size_t k = 0; k < 3000; ++k) EXPECT_LT(std::abs(fine.q[2 * k] + fine.q[2 * k + 1] - coarse.q[k]), 1e-6);
}

TEST(QrseDistribution, TruncationWarningAndErrors) {
  const QrseParams p{.mu = 0.0, .T = 1.0, .alpha = 0.0, .S = 3.0};
  const auto d = qrse_distribution(StateGrid::cells(-2.0, 2.0, 40), p);
  EXPECT_TRUE(d.truncated);
  EXPECT_FALSE(d.warnings.empty());
  EXPECT_THROW(qrse_distribution(StateGrid::cells(0.0, 1.0, 1), p), InvalidArgument);
  QrseParams bad = p;
  bad.T = 0.0;
  EXPECT_THROW(qrse_distribution(StateGrid::cells(-2.0, 2.0, 40), bad), InvalidArgument);
  bad = p;
  bad.S = -1.0;
  EXPECT_THROW(qrse_distribution(StateGrid::cells(-2.0, 2.0, 40), bad), InvalidArgument);
}

TEST(QrseDistribution, AsymmetryGrowsWithSeparation) {
  const auto grid = StateGrid::cells(-12.0, 12.0, 480);
  double prev = -1.0;
  for (double a : {0.0, 0.05, 0.2, 0.8}) {
    const double v = qrse_asymmetry(grid, {.mu = 0.0, .T = 0.5, .alpha = a, .S = 1.0});
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(QrseDefaultGrid, Envelope) {
  const std::vector<double> x = {0.0, 1.0, 2.0, 3.0};
  const auto g = qrse_default_grid(x);
  const double sd = std::sqrt(5.0 / 3.0);
  EXPECT_EQ(g.size(), 512u);
  EXPECT_NEAR(g.x(0) - 0.5 * g.volume(0), -5.0 * sd, 1e-12);
  EXPECT_NEAR(g.x(511) + 0.5 * g.volume(511), 3.0 + 5.0 * sd, 1e-12);
  EXPECT_THROW(qrse_default_grid(std::vector<double>{1.0, 1.0}), InvalidArgument);
}

namespace {

ObservedCounts draw_counts(const SimplexDistribution& q, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> cat(q.weights().begin(), q.weights().end());
  std::vector<std::uint64_t> c(q.size());
  for (std::size_t i = 0; i < n; ++i) ++c[cat(rng)];
  return ObservedCounts(c);
}

}  // namespace

TEST(QrseFit, RecoversParametersAndShiftsWithTheData) {
  const QrseParams truth{.mu = 0.5, .T = 0.5, .alpha = -0.5, .S = 1.0};
  const auto grid = StateGrid::cells(-11.5, 12.5, 240);
  const auto counts = draw_counts(qrse_distribution(grid, truth).q, 4000, 3);
  McmcConfig cfg;
  cfg.burn_in = 2000;
  cfg.samples = 6000;
  const HyperPrior hp({{"mu", PriorScale::uniform, -4.5, 5.5},
                       {"T", PriorScale::log_uniform, 0.01, 10.0},
                       {"alpha", PriorScale::uniform, -5.5, 4.5},
                       {"S", PriorScale::log_uniform, 0.05, 20.0}});
  const auto fit = fit_qrse(QrseFamily(grid), counts, hp, cfg, 11);
  const auto tv = truth.to_vector();
  for (std::size_t j = 0; j < 4; ++j) {
    const auto& s = fit.posterior.chain;
    EXPECT_LT(tv[j], s.quantile(j, 0.9995)) << s.names[j];
    EXPECT_GT(tv[j], s.quantile(j, 0.0005)) << s.names[j];
  }
  EXPECT_TRUE(std::isfinite(fit.feedback));
  EXPECT_FALSE(fit.truncated);

  // Shifting grid, prior box and data by c shifts mu and alpha by c.
  const double c = 3.0;
  const auto shifted = StateGrid::cells(-11.5 + c, 12.5 + c, 240);
  const HyperPrior hs({{"mu", PriorScale::uniform, -4.5 + c, 5.5 + c},
                       {"T", PriorScale::log_uniform, 0.01, 10.0},
                       {"alpha", PriorScale::uniform, -5.5 + c, 4.5 + c},
                       {"S", PriorScale::log_uniform, 0.05, 20.0}});
  const auto fs = fit_qrse(QrseFamily(shifted), counts, hs, cfg, 11);
  EXPECT_NEAR(fs.map.mu, fit.map.mu + c, 1e-4);
  EXPECT_NEAR(fs.map.alpha, fit.map.alpha + c, 1e-4);
  EXPECT_NEAR(fs.map.T, fit.map.T, 1e-4);
  EXPECT_NEAR(fs.map.S, fit.map.S, 1e-4);
}

TEST(QrseFit, HyperPriorMustRespectGuards) {
  const QrseFamily fam(StateGrid::cells(-5.0, 5.0, 50));
  const HyperPrior bad_t({{"mu", PriorScale::uniform, -1, 1},
                          {"T", PriorScale::uniform, 1e-12, 1},
                          {"alpha", PriorScale::uniform, -1, 1},
                          {"S", PriorScale::log_uniform, 0.1, 1}});
  EXPECT_THROW(fit_qrse(fam, ObservedCounts::zeros(50), bad_t, McmcConfig{}, 1), InvalidArgument);
  const HyperPrior three({{"mu", PriorScale::uniform, -1, 1},
                          {"T", PriorScale::uniform, 0.1, 1},
                          {"alpha", PriorScale::uniform, -1, 1}});
  EXPECT_THROW(fit_qrse(fam, ObservedCounts::zeros(50), three, McmcConfig{}, 1), DimensionMismatch);
}
