// Walk through the library: a Gibbs distribution from an energy constraint,
// the hypothesis posterior for a small data set, and an exact versus
// saddle-point evidence comparison.

#include <cstdio>
#include <vector>

#include "meb/meb.hpp"

using namespace meb;

int main() {
  // Four energy levels constrained to mean energy 1.
  const std::vector<double> energy = {0.0, 1.0, 2.0, 4.0};
  const auto ens = models::solve_canonical_ensemble(energy, 1.0);
  std::printf("lambda = %.6f, q_hat =", ens.lambda[0]);
  for (double v : ens.q_hat.weights()) std::printf(" %.4f", v);
  std::printf("\n");

  // Posterior over q for counts (5, 3, 2) with no constraint.
  const ObservedCounts n({5, 3, 2});
  const auto exact = quadrature_posterior_mean(n, nullptr, 150);
  const auto chain = sample_hypothesis_posterior(n, nullptr, McmcConfig{}, 1);
  const auto mean = chain.mean();
  for (std::size_t k = 0; k < 3; ++k) std::printf("q[%zu]: mcmc %.4f, quadrature %.4f\n", k, mean[k], exact[k]);

  // Evidence under the energy constraint at sigma = 1 (lambda = 1).
  const models::StatmechFamily fam({0.0, 0.5, 2.0});
  const double sigma[] = {1.0};
  const auto c = fam.constraint(sigma);
  const ObservedCounts data({575, 349, 76});
  const auto bf = brute_force_log_evidence(data, &c);
  const auto sp = saddle_point_log_evidence(data, &c);
  std::printf("log evidence: brute force %.4f, saddle point %.4f, gap per observation %.5f\n", bf.log_evidence,
              sp.log_evidence, (bf.log_evidence - sp.log_evidence) / 1000.0);
  return 0;
}
