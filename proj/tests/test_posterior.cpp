#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "meb/posterior.hpp"

using namespace meb;

namespace {

// Cell penalties (0, 0.5, 2) at sigma = 1.
Constraint penalty_constraint() {
  return Constraint(ResidualModel::from_rows({{0.0, std::sqrt(0.5), std::sqrt(2.0)}}), ToleranceSpec({1.0}));
}

}  // namespace

// Reference integrals below are adaptive two-dimensional quadrature
// (scipy dblquad, absolute tolerance 1e-13) of the same integrands.

TEST(BruteForceEvidence, TwoStatesNoData) {
  const auto r = brute_force_log_evidence(ObservedCounts::zeros(2), nullptr, 400);
  EXPECT_NEAR(r.log_evidence, 0.5165347884053579, 2e-5);
  EXPECT_EQ(r.nodes, 400u);
}

TEST(BruteForceEvidence, ThreeStatesNoData) {
  const auto r = brute_force_log_evidence(ObservedCounts::zeros(3), nullptr, 150);
  EXPECT_NEAR(r.log_evidence, 0.15835445906932774, 2e-4);
  EXPECT_EQ(r.nodes, 150u * 150u);
}

TEST(BruteForceEvidence, ThreeStatesWithData) {
  const ObservedCounts n({5, 3, 2});
  EXPECT_NEAR(brute_force_log_evidence(n, nullptr, 150).log_evidence, -1.4287027108222032, 2e-4);
  const auto c = penalty_constraint();
  EXPECT_NEAR(brute_force_log_evidence(n, &c, 150).log_evidence, -2.035956264017052, 2e-4);
}

TEST(BruteForceEvidence, RefinementConverges) {
  const ObservedCounts n({5, 3, 2});
  const double a = brute_force_log_evidence(n, nullptr, 60).log_evidence;
  const double b = brute_force_log_evidence(n, nullptr, 240).log_evidence;
  EXPECT_LT(std::abs(b + 1.4287027108222032), std::abs(a + 1.4287027108222032));
}

TEST(BruteForceEvidence, Errors) {
  EXPECT_THROW(brute_force_log_evidence(ObservedCounts::zeros(5)), UnsupportedDimension);
  EXPECT_THROW(brute_force_log_evidence(ObservedCounts::zeros(3), nullptr, 10), InvalidArgument);
  const auto c = penalty_constraint();
  EXPECT_THROW(brute_force_log_evidence(ObservedCounts::zeros(2), &c, 100), DimensionMismatch);
}

TEST(QuadratureMean, MatchesReference) {
  const auto m = quadrature_posterior_mean(ObservedCounts({5, 3, 2}), nullptr, 150);
  EXPECT_NEAR(m[0], 0.4535772690734833, 1e-4);
  EXPECT_NEAR(m[1], 0.3099424132538383, 1e-4);
  EXPECT_NEAR(m[2], 0.2364803176726784, 1e-4);
}

TEST(SaddlePoint, IsMinusNTimesDivergence) {
  const ObservedCounts n({50, 30, 20});
  const auto c = penalty_constraint();
  const auto r = saddle_point_log_evidence(n, &c);
  const SimplexDistribution qh(r.q_hat);
  EXPECT_NEAR(r.log_evidence, -100.0 * relative_entropy(n.to_data_distribution(), qh), 1e-10);
  EXPECT_NEAR(r.divergence, relative_entropy(n.to_data_distribution(), qh), 1e-12);
  EXPECT_EQ(saddle_point_log_evidence(ObservedCounts::zeros(3), &c).log_evidence, 0.0);
  // Uniform q_hat without a constraint.
  const auto u = saddle_point_log_evidence(n);
  EXPECT_NEAR(u.q_hat[1], 1.0 / 3.0, 1e-15);
}

TEST(MapHypothesis, MatchesNumericalOptimum) {
  const auto c = penalty_constraint();
  const auto q = map_hypothesis(ObservedCounts({5, 3, 2}), &c);
  EXPECT_NEAR(q[0], 0.50915439, 2e-6);
  EXPECT_NEAR(q[1], 0.30579857, 2e-6);
  EXPECT_NEAR(q[2], 0.18504704, 2e-6);
}

TEST(MapHypothesis, EmptyCellsStayInterior) {
  const Constraint c(ResidualModel::from_rows({{std::sqrt(0.3), 0.0, 1.0, 0.0}}), ToleranceSpec({1.0}));
  const auto q = map_hypothesis(ObservedCounts({0, 7, 1, 0}), &c);
  EXPECT_NEAR(q[0], 0.0001903105048339103, 1e-6);
  EXPECT_NEAR(q[1], 0.8622184845445147, 1e-5);
  EXPECT_NEAR(q[2], 0.13733431444418998, 1e-5);
  EXPECT_NEAR(q[3], 0.00025689050646142837, 1e-6);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_GT(q[k], 0.0);
}

TEST(MapHypothesis, NoDataNoConstraintIsUniform) {
  const auto q = map_hypothesis(ObservedCounts::zeros(6));
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(q[k], 1.0 / 6.0, 1e-14);
}

TEST(MapHypothesis, NoDataIsTheGibbsDistribution) {
  const auto c = penalty_constraint();
  const auto q = map_hypothesis(ObservedCounts::zeros(3), &c);
  const auto lq = c.log_q_hat();
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(q[k], std::exp(lq[k]), 1e-13);
}

TEST(MapHypothesis, StationarityOfTheLogPosterior) {
  // Directional derivatives along the simplex vanish at the maximizer.
  const auto c = penalty_constraint();
  const ObservedCounts n({12, 0, 3});
  const auto q = map_hypothesis(n, &c);
  const double f0 = log_posterior_q(q, n, &c);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      std::vector<double> w(q.weights().begin(), q.weights().end());
      const double h = 1e-6 * std::min(w[i], w[j]);
      w[i] += h;
      w[j] -= h;
      EXPECT_LE(log_posterior_q(SimplexDistribution(w), n, &c), f0 + 1e-12);
    }
}

TEST(LogPosterior, SupportViolationAndComponents) {
  const ObservedCounts n({2, 1, 0});
  EXPECT_EQ(log_posterior_q(SimplexDistribution({1.0, 0.0, 0.0}), n), -std::numeric_limits<double>::infinity());
  const SimplexDistribution p = n.to_data_distribution();
  // At q = p the divergence term is zero and only H[p] - c . p remains.
  const auto c = penalty_constraint();
  const auto pen = c.cell_penalty();
  double expect = shannon_entropy(p);
  for (std::size_t k = 0; k < 3; ++k) expect -= pen[k] * p[k];
  EXPECT_NEAR(log_posterior_q(p, n, &c), expect, 1e-14);
}

TEST(Property, PriorFormsDifferByLogPartition) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  const std::size_t k = 20;
  for (int inst = 0; inst < 5; ++inst) {
    Eigen::MatrixXd g(2, k);
    for (std::size_t j = 0; j < k; ++j) g(0, j) = nd(rng), g(1, j) = nd(rng);
    const Constraint c(ResidualModel(g), ToleranceSpec({0.8, 1.7}));
    const double lz = log_partition(c.model(), c.tolerance().multipliers());
    for (int t = 0; t < 40; ++t) {
      std::vector<double> q(k);
      double z = 0.0;
      for (auto& v : q) z += (v = ex(rng));
      for (auto& v : q) v /= z;
      const SimplexDistribution qq(q);
      const double d = log_constrained_prior(qq, c, PriorForm::direct) -
                       log_constrained_prior(qq, c, PriorForm::divergence);
      EXPECT_NEAR(d, lz, 1e-9);
    }
  }
}

TEST(Property, EvidenceIsPermutationInvariant) {
  const ObservedCounts n({4, 9, 1});
  const auto c = penalty_constraint();
  const std::size_t perm[] = {2, 0, 1};
  const auto cp = c.permuted(perm);
  const double a = brute_force_log_evidence(n, &c, 120).log_evidence;
  const double b = brute_force_log_evidence(n.permuted(perm), &cp, 120).log_evidence;
  EXPECT_NEAR(a, b, 1e-3);
  EXPECT_NEAR(saddle_point_log_evidence(n, &c).log_evidence,
              saddle_point_log_evidence(n.permuted(perm), &cp).log_evidence, 1e-12);
}

TEST(Property, EvidenceNeverExceedsZeroDataBound) {
  // -N H[p || q] <= 0, so the brute-force evidence is at most the N = 0 value.
  const auto c = penalty_constraint();
  const double base = brute_force_log_evidence(ObservedCounts::zeros(3), &c, 100).log_evidence;
  for (auto n : {ObservedCounts({1, 0, 0}), ObservedCounts({3, 3, 3}), ObservedCounts({0, 10, 40})})
    EXPECT_LE(brute_force_log_evidence(n, &c, 100).log_evidence, base);
}
