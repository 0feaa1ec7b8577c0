#pragma once

// Linear regression as an approximate residual constraint.
//
// A state is x = (1, x_1, ..., x_{R-1}, y) and the residual of the linear
// hypothesis is g_beta[x] = x . (beta, -1). To give the constraint
// counterfactual room, each distinct observed design row carries a lattice
// of dependent-variable cells y_i + j * step, j = -J..J, with the observed y
// at j = 0. Under q_hat the lattice column of a row is a discretized
// Gaussian in the residual, so its normalizer is a theta-function sum that
// barely depends on beta and the saddle-point posterior is the Gaussian
// likelihood.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "meb/cme.hpp"
#include "meb/error.hpp"
#include "meb/inference.hpp"
#include "meb/numeric.hpp"
#include "meb/posterior.hpp"
#include "meb/prob.hpp"

namespace meb::models {

/// Residuals g = x . (beta, -1) for every grid cell. The grid carries R+1
/// coordinates per cell with the constant 1 first and the dependent
/// variable last; beta has R entries.
inline ResidualModel regression_residual_model(const StateGrid& grid, std::span<const double> beta) {
  if (grid.dim() != beta.size() + 1)
    throw DimensionMismatch("regression_residual_model: grid has " + std::to_string(grid.dim()) +
                            " coordinates per cell but beta has " + std::to_string(beta.size()) +
                            " entries (need dim = R + 1)");
  const std::size_t r = beta.size();
  Eigen::MatrixXd g(1, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto x = grid.value(k);
    if (x[0] != 1.0)
      throw InvalidArgument("regression_residual_model: first coordinate of every cell must be 1");
    double v = -x[r];
    for (std::size_t i = 0; i < r; ++i) v += beta[i] * x[i];
    g(0, static_cast<Eigen::Index>(k)) = v;
  }
  return ResidualModel(std::move(g), std::vector<double>(beta.begin(), beta.end()));
}

struct LeastSquares {
  std::vector<double> beta;
  double condition_number = 0.0;
  double residual_sum_of_squares = 0.0;
  double total_weight = 0.0;
};

/// Weighted least squares by the normal equations. Throws on a design
/// whose normal matrix has condition number above 1e12.
inline LeastSquares weighted_least_squares(const std::vector<std::vector<double>>& design,
                                           std::span<const double> response,
                                           std::span<const double> weight) {
  if (design.empty()) throw InvalidArgument("least squares: no rows");
  const std::size_t r = design.front().size();
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(r, r);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(r);
  double wsum = 0.0;
  for (std::size_t i = 0; i < design.size(); ++i) {
    if (design[i].size() != r) throw DimensionMismatch("least squares: ragged design");
    const Eigen::Map<const Eigen::VectorXd> x(design[i].data(), static_cast<Eigen::Index>(r));
    xtx += weight[i] * x * x.transpose();
    xty += weight[i] * response[i] * x;
    wsum += weight[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xtx);
  const double emax = eig.eigenvalues().maxCoeff(), emin = eig.eigenvalues().minCoeff();
  const double cond = emin > 0.0 ? emax / emin : kInf;
  if (!(cond < 1e12))
    throw InvalidArgument("least squares: design is rank deficient (normal-matrix condition number " +
                          std::to_string(cond) + ")");
  const Eigen::VectorXd b = xtx.ldlt().solve(xty);
  LeastSquares out;
  out.beta.assign(b.data(), b.data() + r);
  out.condition_number = cond;
  for (std::size_t i = 0; i < design.size(); ++i) {
    double fit = 0.0;
    for (std::size_t j = 0; j < r; ++j) fit += b[j] * design[i][j];
    out.residual_sum_of_squares += weight[i] * (response[i] - fit) * (response[i] - fit);
  }
  out.total_weight = wsum;
  return out;
}

struct RegressionLatticeOptions {
  /// Spacing of the dependent-variable lattice; 0 selects sd(y) / 50.
  double step = 0.0;
  /// Lattice half-width J in cells; 0 selects ceil(8 sd(y) / step).
  std::size_t half_width = 0;
};

namespace detail {

/// log sum_{j=lo..hi} exp(-(r - j step)^2 / sigma^2).
inline double log_lattice_sum_direct(double r, double step, double sigma, long lo, long hi) {
  LogSumExp acc;
  for (long j = lo; j <= hi; ++j) {
    const double e = (r - static_cast<double>(j) * step) / sigma;
    acc.add(-e * e);
  }
  return acc.value();
}

}  // namespace detail

/// Regression family over the per-row dependent-variable lattice;
/// parameters are (beta_0, ..., beta_{R-1}, sigma).
class RegressionFamily {
 public:
  /// rows: (1, x_1, ..., x_{R-1}, y) for each observation. Identical rows
  /// share one lattice column and their multiplicity becomes its count.
  explicit RegressionFamily(const std::vector<std::vector<double>>& rows,
                            const RegressionLatticeOptions& options = {}) {
    if (rows.empty()) throw InvalidArgument("RegressionFamily: no observations");
    dim_ = rows.front().size();
    if (dim_ < 2) throw InvalidArgument("RegressionFamily: rows need a constant and a dependent variable");
    std::map<std::vector<double>, std::uint64_t> unique;
    for (const auto& row : rows) {
      if (row.size() != dim_) throw DimensionMismatch("RegressionFamily: ragged observation rows");
      if (row[0] != 1.0) throw InvalidArgument("RegressionFamily: first coordinate of every row must be 1");
      for (double v : row)
        if (!std::isfinite(v)) throw InvalidArgument("RegressionFamily: non-finite observation");
      ++unique[row];
    }
    for (const auto& [row, n] : unique) {
      design_.emplace_back(row.begin(), row.end() - 1);
      response_.push_back(row.back());
      multiplicity_.push_back(n);
    }
    double mean = 0.0, n_total = 0.0;
    for (std::size_t i = 0; i < response_.size(); ++i) {
      mean += static_cast<double>(multiplicity_[i]) * response_[i];
      n_total += static_cast<double>(multiplicity_[i]);
    }
    mean /= n_total;
    double var = 0.0;
    for (std::size_t i = 0; i < response_.size(); ++i)
      var += static_cast<double>(multiplicity_[i]) * (response_[i] - mean) * (response_[i] - mean);
    double sd = std::sqrt(var / n_total);
    if (!(sd > 0.0)) sd = 1e-3 * (std::abs(mean) + 1.0);
    step_ = options.step > 0.0 ? options.step : sd / 50.0;
    half_ = options.half_width > 0 ? options.half_width
                                   : static_cast<std::size_t>(std::ceil(8.0 * sd / step_));
  }

  std::size_t rows() const noexcept { return design_.size(); }
  std::size_t coefficient_count() const noexcept { return dim_ - 1; }
  std::size_t parameter_count() const noexcept { return dim_; }
  std::size_t column_length() const noexcept { return 2 * half_ + 1; }
  std::size_t state_count() const noexcept { return rows() * column_length(); }
  double step() const noexcept { return step_; }
  std::size_t half_width() const noexcept { return half_; }
  const std::vector<std::vector<double>>& design() const noexcept { return design_; }
  const std::vector<double>& response() const noexcept { return response_; }
  const std::vector<std::uint64_t>& multiplicity() const noexcept { return multiplicity_; }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < coefficient_count(); ++i) n.push_back("beta" + std::to_string(i));
    n.push_back("sigma");
    return n;
  }

  std::size_t cell_index(std::size_t row, long j) const {
    return row * column_length() + static_cast<std::size_t>(j + static_cast<long>(half_));
  }

  /// Observation counts on the lattice: each row's multiplicity at j = 0.
  ObservedCounts counts() const {
    std::vector<std::uint64_t> n(state_count(), 0);
    for (std::size_t i = 0; i < rows(); ++i) n[cell_index(i, 0)] = multiplicity_[i];
    return ObservedCounts(std::move(n));
  }

  /// The full lattice as a grid with coordinates (1, x..., y).
  StateGrid grid() const {
    std::vector<double> values, widths;
    values.reserve(state_count() * dim_);
    widths.reserve(state_count() * dim_);
    for (std::size_t i = 0; i < rows(); ++i)
      for (long j = -static_cast<long>(half_); j <= static_cast<long>(half_); ++j) {
        values.insert(values.end(), design_[i].begin(), design_[i].end());
        values.push_back(response_[i] + static_cast<double>(j) * step_);
        widths.insert(widths.end(), dim_ - 1, 1.0);
        widths.push_back(step_);
      }
    return StateGrid(dim_, std::move(values), std::move(widths));
  }

  double residual(std::size_t row, std::span<const double> beta) const {
    double r = -response_[row];
    for (std::size_t j = 0; j < beta.size(); ++j) r += beta[j] * design_[row][j];
    return r;
  }

  /// log sum_j exp(-(r - j step)^2 / sigma^2) over j = -J..J, exact to
  /// rounding. Away from the lattice ends the sum is evaluated on the
  /// infinite lattice, directly when sigma is small against the step and
  /// through its Poisson-summation (theta-function) form otherwise.
  double log_column_sum(double r, double sigma) const {
    const double ratio = sigma / step_;
    const long jlim = static_cast<long>(half_);
    const double reach = 7.0 * sigma / step_ + 2.0;
    const double centre = r / step_;
    const bool clipped = centre - reach < -static_cast<double>(jlim) ||
                         centre + reach > static_cast<double>(jlim);
    if (clipped || ratio < 1.5) {
      long lo = static_cast<long>(std::floor(centre - reach));
      long hi = static_cast<long>(std::ceil(centre + reach));
      lo = std::clamp(lo, -jlim, jlim);
      hi = std::clamp(hi, -jlim, jlim);
      return detail::log_lattice_sum_direct(r, step_, sigma, lo, hi);
    }
    constexpr double pi = std::numbers::pi;
    double series = 1.0;
    for (int m = 1; m < 8; ++m) {
      const double a = std::exp(-pi * pi * m * m * ratio * ratio);
      if (a < 1e-18) break;
      series += 2.0 * a * std::cos(2.0 * pi * m * centre);
    }
    return std::log(sigma * std::sqrt(pi) / step_) + std::log(series);
  }

  /// log Z(beta, sigma) over the whole lattice.
  double log_partition(std::span<const double> theta) const {
    const auto [beta, sigma] = split(theta);
    LogSumExp acc;
    for (std::size_t i = 0; i < rows(); ++i) acc.add(log_column_sum(residual(i, beta), sigma));
    return acc.value();
  }

  /// Dense normalized log q_hat over all lattice cells.
  std::vector<double> log_equilibrium(std::span<const double> theta) const {
    const auto [beta, sigma] = split(theta);
    const double lz = log_partition(theta);
    std::vector<double> out(state_count());
    for (std::size_t i = 0; i < rows(); ++i) {
      const double r = residual(i, beta);
      for (long j = -static_cast<long>(half_); j <= static_cast<long>(half_); ++j) {
        const double e = (r - static_cast<double>(j) * step_) / sigma;
        out[cell_index(i, j)] = -e * e - lz;
      }
    }
    return out;
  }

  Constraint constraint(std::span<const double> theta) const {
    const auto [beta, sigma] = split(theta);
    return Constraint(regression_residual_model(grid(), beta), ToleranceSpec({sigma}));
  }

  /// Evaluator of -N H[p || q_hat_theta] for fixed counts; visits only the
  /// occupied cells.
  auto saddle_evaluator(const ObservedCounts& counts) const {
    if (counts.size() != state_count())
      throw DimensionMismatch("RegressionFamily: counts do not live on this lattice");
    struct Entry {
      std::size_t row;
      long j;
      double n;
      double log_p;
    };
    std::vector<Entry> occupied;
    const double log_n = counts.total() > 0 ? std::log(static_cast<double>(counts.total())) : 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] == 0) continue;
      const std::size_t row = k / column_length();
      const long j = static_cast<long>(k % column_length()) - static_cast<long>(half_);
      const double n = static_cast<double>(counts[k]);
      occupied.push_back({row, j, n, std::log(n) - log_n});
    }
    const double total = static_cast<double>(counts.total());
    return [this, occupied = std::move(occupied), total](std::span<const double> theta) {
      if (total == 0.0) return 0.0;
      const auto [beta, sigma] = split(theta);
      const double lz = log_partition(theta);
      CompensatedSum s;
      for (const auto& e : occupied) {
        const double g = (residual(e.row, beta) - static_cast<double>(e.j) * step_) / sigma;
        s.add(e.n * (-g * g - lz - e.log_p));
      }
      return std::min(0.0, s.value());
    };
  }

  /// sum_k q_hat_k g_k^2, the achieved squared-residual moment.
  double achieved_moment(std::span<const double> theta) const {
    const auto [beta, sigma] = split(theta);
    const double lz = log_partition(theta);
    CompensatedSum s;
    const long jlim = static_cast<long>(half_);
    for (std::size_t i = 0; i < rows(); ++i) {
      const double r = residual(i, beta);
      const double reach = 9.0 * sigma / step_ + 2.0;
      const long lo = std::clamp(static_cast<long>(std::floor(r / step_ - reach)), -jlim, jlim);
      const long hi = std::clamp(static_cast<long>(std::ceil(r / step_ + reach)), -jlim, jlim);
      for (long j = lo; j <= hi; ++j) {
        const double g = r - static_cast<double>(j) * step_;
        s.add(g * g * std::exp(-(g / sigma) * (g / sigma) - lz));
      }
    }
    return s.value();
  }

 private:
  struct Split {
    std::span<const double> beta;
    double sigma;
  };
  Split split(std::span<const double> theta) const {
    if (theta.size() != parameter_count())
      throw DimensionMismatch("RegressionFamily: expected " + std::to_string(parameter_count()) +
                              " parameters (beta..., sigma)");
    if (!(theta.back() > 0.0)) throw InvalidArgument("RegressionFamily: sigma must be > 0");
    return {theta.first(theta.size() - 1), theta.back()};
  }

  std::size_t dim_ = 0;
  std::vector<std::vector<double>> design_;
  std::vector<double> response_;
  std::vector<std::uint64_t> multiplicity_;
  double step_ = 0.0;
  std::size_t half_ = 0;
};

struct RegressionFit {
  std::vector<double> beta;
  double sigma = 0.0;
  LeastSquares least_squares;        ///< normal-equations solution on the same rows
  double achieved_moment = 0.0;      ///< sum q_hat g^2 at the MAP
  double mean_squared_residual = 0.0;  ///< least-squares RSS / N
  ParameterPosterior posterior;
};

/// Maximum a posteriori (beta, sigma) under P[beta, sigma] exp(-N H[p || q_hat]),
/// found from the parameter sampler's best visited state and polished.
inline RegressionFit fit_regression_map(const RegressionFamily& family, const ObservedCounts& counts,
                                        const HyperPrior& hyper, const McmcConfig& mcmc,
                                        std::uint64_t seed) {
  if (hyper.size() != family.parameter_count())
    throw DimensionMismatch("fit_regression_map: hyperprior must cover beta_0..beta_{R-1} and sigma");
  if (counts.size() != family.state_count())
    throw DimensionMismatch("fit_regression_map: counts do not live on the regression lattice");
  std::vector<double> weight(family.rows(), 0.0);
  for (std::size_t i = 0; i < family.rows(); ++i)
    for (long j = -static_cast<long>(family.half_width()); j <= static_cast<long>(family.half_width()); ++j)
      weight[i] += static_cast<double>(counts[family.cell_index(i, j)]);
  if (counts.total() < family.coefficient_count() + 1)
    throw InvalidArgument("fit_regression_map: need N >= R + 1 observations");
  RegressionFit fit;
  fit.least_squares = weighted_least_squares(family.design(), family.response(), weight);
  fit.posterior = sample_parameter_posterior(family, counts, hyper, EvidenceMode::saddle, mcmc, seed);
  fit.beta.assign(fit.posterior.map.begin(), fit.posterior.map.end() - 1);
  fit.sigma = fit.posterior.map.back();
  fit.achieved_moment = family.achieved_moment(fit.posterior.map);
  fit.mean_squared_residual = fit.least_squares.residual_sum_of_squares / fit.least_squares.total_weight;
  return fit;
}

}  // namespace meb::models
