#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "meb/prob.hpp"

using namespace meb;

namespace {

SimplexDistribution random_simplex(std::mt19937_64& rng, std::size_t k) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> w(k);
  double s = 0.0;
  for (auto& v : w) s += (v = e(rng));
  for (auto& v : w) v /= s;
  return SimplexDistribution(std::move(w));
}

}  // namespace

TEST(StateGrid, LinspaceEndpointsAndWidths) {
  const auto g = StateGrid::linspace(-5.0, 5.0, 201);
  EXPECT_EQ(g.size(), 201u);
  EXPECT_EQ(g.dim(), 1u);
  EXPECT_DOUBLE_EQ(g.x(0), -5.0);
  EXPECT_DOUBLE_EQ(g.x(200), 5.0);
  EXPECT_DOUBLE_EQ(g.x(100), 0.0);
  EXPECT_DOUBLE_EQ(g.volume(7), 0.05);
}

TEST(StateGrid, CellsUseMidpoints) {
  const auto g = StateGrid::cells(0.0, 1.0, 4);
  EXPECT_DOUBLE_EQ(g.x(0), 0.125);
  EXPECT_DOUBLE_EQ(g.x(3), 0.875);
  EXPECT_DOUBLE_EQ(g.volume(2), 0.25);
}

TEST(StateGrid, RejectsBadCells) {
  EXPECT_THROW(StateGrid(1, {}, {}), InvalidArgument);
  EXPECT_THROW(StateGrid(2, {1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}), InvalidArgument);
  EXPECT_THROW(StateGrid(1, {1.0}, {0.0}), InvalidArgument);
  EXPECT_THROW(StateGrid(1, {NAN}, {1.0}), InvalidArgument);
}

TEST(SimplexDistribution, ValidatesAndRenormalizes) {
  EXPECT_THROW(SimplexDistribution({0.5, 0.6}), InvalidArgument);
  EXPECT_THROW(SimplexDistribution({1.5, -0.5}), InvalidArgument);
  EXPECT_THROW(SimplexDistribution(std::vector<double>{}), InvalidArgument);
  const SimplexDistribution q({0.3, 0.7 + 1e-12});
  EXPECT_NEAR(q[0] + q[1], 1.0, 1e-15);
}

TEST(SimplexDistribution, FromLogWeights) {
  const std::vector<double> lw = {std::log(1.0), std::log(3.0), -std::numeric_limits<double>::infinity()};
  const auto q = SimplexDistribution::from_log_weights(lw);
  EXPECT_NEAR(q[0], 0.25, 1e-15);
  EXPECT_NEAR(q[1], 0.75, 1e-15);
  EXPECT_EQ(q[2], 0.0);
}

TEST(ObservedCounts, TotalsAndDataDistribution) {
  const ObservedCounts n({5, 3, 2});
  EXPECT_EQ(n.total(), 10u);
  const auto p = n.to_data_distribution();
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_THROW(ObservedCounts::zeros(3).to_data_distribution(), InvalidArgument);
  EXPECT_EQ(n.scaled(3).total(), 30u);
}

TEST(Entropy, UniformAndPointMass) {
  EXPECT_NEAR(shannon_entropy(SimplexDistribution::uniform(4)), std::log(4.0), 1e-15);
  EXPECT_EQ(shannon_entropy(SimplexDistribution({1.0, 0.0, 0.0})), 0.0);
}

TEST(Entropy, DirectSummationValues) {
  EXPECT_NEAR(shannon_entropy(SimplexDistribution({0.5, 0.25, 0.25})), 1.0397207708399179, 1e-12);
  EXPECT_NEAR(shannon_entropy(SimplexDistribution({0.7, 0.2, 0.1})), 0.8018185525433372, 1e-12);
}

TEST(RelativeEntropy, Cases) {
  const SimplexDistribution a({0.3, 0.7});
  EXPECT_EQ(relative_entropy(a, a), 0.0);
  EXPECT_NEAR(relative_entropy(SimplexDistribution({1.0, 0.0}), SimplexDistribution({0.5, 0.5})),
              std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isinf(relative_entropy(SimplexDistribution({0.5, 0.5}), SimplexDistribution({1.0, 0.0}))));
  EXPECT_THROW(relative_entropy(a, SimplexDistribution::uniform(3)), DimensionMismatch);
}

TEST(Likelihood, SupportViolationIsMinusInfinity) {
  EXPECT_EQ(multinomial_log_likelihood(ObservedCounts({1, 1}), SimplexDistribution({1.0, 0.0})),
            -std::numeric_limits<double>::infinity());
  EXPECT_EQ(multinomial_log_likelihood(ObservedCounts({0, 0}), SimplexDistribution({1.0, 0.0})), 0.0);
}

TEST(Property, EntropyBoundsKlNonnegativityAndLikelihoodIdentity) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> kd(2, 30), nd(0, 50);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t k = static_cast<std::size_t>(kd(rng));
    const auto q = random_simplex(rng, k);
    const auto h = shannon_entropy(q);
    EXPECT_GE(h, -1e-15);
    EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-12);

    std::vector<std::uint64_t> n(k);
    for (auto& v : n) v = static_cast<std::uint64_t>(nd(rng));
    n[0] += 1;
    const ObservedCounts counts(n);
    const auto p = counts.to_data_distribution();
    EXPECT_GE(relative_entropy(p, q), 0.0);
    EXPECT_EQ(relative_entropy(q, q), 0.0);

    // sum n log q = -N H[p||q] + N sum p log p
    const double nn = static_cast<double>(counts.total());
    double plogp = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      if (p[i] > 0) plogp += p[i] * std::log(p[i]);
    const double lhs = multinomial_log_likelihood(counts, q);
    const double rhs = -nn * relative_entropy(p, q) + nn * plogp;
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));

    std::vector<double> lq(k);
    for (std::size_t i = 0; i < k; ++i) lq[i] = std::log(q[i]);
    EXPECT_NEAR(neg_scaled_divergence(counts, lq), -nn * relative_entropy(p, q),
                1e-9 * std::max(1.0, nn * relative_entropy(p, q)));
  }
}

TEST(Property, PermutationInvariance) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t k = 12;
    const auto q = random_simplex(rng, k);
    const auto r = random_simplex(rng, k);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_NEAR(shannon_entropy(q.permuted(perm)), shannon_entropy(q), 1e-14);
    EXPECT_NEAR(relative_entropy(q.permuted(perm), r.permuted(perm)), relative_entropy(q, r), 1e-13);
  }
}
