#pragma once

// Canonical-ensemble constraint: a known energy per cell and a bound on the
// mean energy. Embedding g = sqrt(E) turns the energy constraint into an
// expected squared residual, so q_hat is proportional to exp(-lambda E).
// Energies must therefore be nonnegative.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "meb/cme.hpp"
#include "meb/error.hpp"
#include "meb/posterior.hpp"
#include "meb/prob.hpp"

namespace meb::models {

inline ResidualModel statmech_residual_model(std::span<const double> energy) {
  if (energy.empty()) throw InvalidArgument("statmech_residual_model: empty energy vector");
  Eigen::MatrixXd g(1, static_cast<Eigen::Index>(energy.size()));
  for (std::size_t k = 0; k < energy.size(); ++k) {
    if (!std::isfinite(energy[k]) || energy[k] < 0.0)
      throw InvalidArgument("statmech_residual_model: energies must be finite and >= 0 "
                            "(square-root embedding), cell " + std::to_string(k));
    g(0, static_cast<Eigen::Index>(k)) = std::sqrt(energy[k]);
  }
  return ResidualModel(std::move(g));
}

/// Gibbs distribution with mean energy `mean_energy`.
inline CmeSolution solve_canonical_ensemble(std::span<const double> energy, double mean_energy,
                                            const CmeOptions& options = {}) {
  const auto model = statmech_residual_model(energy);
  const double t[] = {mean_energy};
  return solve_cme(model, t, options);
}

/// Energies E(x) = (x - center)^2 at the first coordinate of every cell.
inline std::vector<double> quadratic_energy(const StateGrid& grid, double center = 0.0) {
  std::vector<double> e(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double dx = grid.x(k) - center;
    e[k] = dx * dx;
  }
  return e;
}

/// One-parameter family q_hat_sigma proportional to exp(-E / sigma^2).
class StatmechFamily {
 public:
  explicit StatmechFamily(std::vector<double> energy)
      : energy_(std::move(energy)), model_(statmech_residual_model(energy_)) {}

  std::size_t state_count() const noexcept { return energy_.size(); }
  std::size_t parameter_count() const noexcept { return 1; }
  static std::vector<std::string> parameter_names() { return {"sigma"}; }
  const std::vector<double>& energy() const noexcept { return energy_; }

  std::vector<double> log_equilibrium(std::span<const double> theta) const {
    const double s = check(theta);
    const double lambda[] = {1.0 / (s * s)};
    return gibbs_log_weights(model_, lambda);
  }

  Constraint constraint(std::span<const double> theta) const {
    return Constraint(model_, ToleranceSpec({check(theta)}));
  }

 private:
  static double check(std::span<const double> theta) {
    if (theta.size() != 1) throw DimensionMismatch("StatmechFamily: expects one parameter (sigma)");
    if (!(theta[0] > 0.0)) throw InvalidArgument("StatmechFamily: sigma must be > 0");
    return theta[0];
  }

  std::vector<double> energy_;
  ResidualModel model_;
};

}  // namespace meb::models
