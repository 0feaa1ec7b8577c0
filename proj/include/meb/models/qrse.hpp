#pragma once

// Quantal response statistical equilibrium: a one-dimensional outcome x
// jointly distributed with a binary entry/exit action. The action follows a
// logistic response around the indifference point mu with temperature T,
// and a tanh feedback term ties the outcome to its competitive central
// tendency alpha at scale S. The marginal kernel is
//
//   log f[x] = H_b(p_entry(x)) - tanh((x - mu) / T) (x - alpha) / S.
//
// The logistic conditional uses (x - mu) / T while the density uses
// tanh((x - mu) / T), so entry - exit = tanh((x - mu) / (2T)) differs from
// the tanh in the density by a factor of 2 in T. Both conventions are kept
// unreconciled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "meb/error.hpp"
#include "meb/inference.hpp"
#include "meb/numeric.hpp"
#include "meb/prob.hpp"

namespace meb::models {

inline constexpr double kMinTemperature = 1e-8;

struct QrseParams {
  double mu = 0.0;
  double T = 1.0;
  double alpha = 0.0;
  double S = 1.0;

  void validate() const {
    if (!std::isfinite(mu) || !std::isfinite(alpha))
      throw InvalidArgument("QrseParams: mu and alpha must be finite");
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("QrseParams: T must be finite and > 0");
    if (!(S > 0.0) || !std::isfinite(S)) throw InvalidArgument("QrseParams: S must be finite and > 0");
  }
  std::vector<double> to_vector() const { return {mu, T, alpha, S}; }
  static QrseParams from_vector(std::span<const double> v) {
    if (v.size() != 4) throw DimensionMismatch("QrseParams: expected (mu, T, alpha, S)");
    return {v[0], v[1], v[2], v[3]};
  }
};

namespace detail {

inline double guarded_temperature(double t) {
  if (!(t > 0.0)) throw InvalidArgument("qrse: temperature T must be > 0");
  return std::max(t, kMinTemperature);
}

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Probability of entry at outcome x: 1 / (1 + exp(-(x - mu) / T)).
inline double qrse_conditional_entry(double x, double mu, double T) {
  return detail::logistic((x - mu) / detail::guarded_temperature(T));
}

inline double qrse_conditional_exit(double x, double mu, double T) {
  return detail::logistic(-(x - mu) / detail::guarded_temperature(T));
}

/// Binary entropy of the entry/exit conditional, stable for any z.
inline double qrse_action_entropy(double x, double mu, double T) {
  const double z = (x - mu) / detail::guarded_temperature(T);
  const double p = detail::logistic(z), q = detail::logistic(-z);
  // -log p = softplus(-z), -log(1 - p) = softplus(z)
  return (p > 0.0 ? p * softplus(-z) : 0.0) + (q > 0.0 ? q * softplus(z) : 0.0);
}

inline double qrse_log_kernel(double x, const QrseParams& p) {
  const double t = detail::guarded_temperature(p.T);
  return qrse_action_entropy(x, p.mu, t) - std::tanh((x - p.mu) / t) * (x - p.alpha) / p.S;
}

struct QrseDensity {
  SimplexDistribution q;
  std::vector<double> log_q;  ///< normalized log cell masses
  bool truncated = false;
  std::vector<std::string> warnings;
};

/// Cell masses proportional to width * exp(kernel(center)). Flags
/// truncation when either end of the grid is within 12 nats of the peak.
inline QrseDensity qrse_distribution(const StateGrid& grid, const QrseParams& params) {
  params.validate();
  if (grid.dim() != 1) throw DimensionMismatch("qrse_distribution: grid must be one-dimensional");
  if (grid.size() < 2) throw InvalidArgument("qrse_distribution: grid needs at least two cells");
  const std::size_t k = grid.size();
  std::vector<double> kernel(k), logw(k);
  double peak = -kInf;
  for (std::size_t i = 0; i < k; ++i) {
    kernel[i] = qrse_log_kernel(grid.x(i), params);
    const double w = grid.volume(i);
    if (!(w > 0.0)) throw InvalidArgument("qrse_distribution: cell widths must be > 0");
    logw[i] = kernel[i] + std::log(w);
    peak = std::max(peak, kernel[i]);
  }
  const double lz = log_sum_exp(logw);
  for (auto& v : logw) v -= lz;
  QrseDensity out{SimplexDistribution::from_log_weights(logw), logw, false, {}};
  if (kernel.front() > peak - 12.0 || kernel.back() > peak - 12.0) {
    out.truncated = true;
    out.warnings.push_back("qrse_distribution: grid ends are within 12 nats of the kernel peak; "
                           "tail mass is truncated");
  }
  return out;
}

/// Achieved feedback moment sum_k q_k tanh((x_k - mu) / T) (x_k - alpha).
inline double qrse_feedback_moment(const StateGrid& grid, const SimplexDistribution& q,
                                   const QrseParams& p) {
  const double t = detail::guarded_temperature(p.T);
  CompensatedSum s;
  for (std::size_t i = 0; i < grid.size(); ++i)
    s.add(q[i] * std::tanh((grid.x(i) - p.mu) / t) * (grid.x(i) - p.alpha));
  return s.value();
}

/// Integrated absolute difference of the density about its own mu,
/// sum over mirrored cell pairs of |f(mu + h) - f(mu - h)| dh, evaluated on
/// `grid` by the kernel itself so the grid need not be centred on mu.
inline double qrse_asymmetry(const StateGrid& grid, const QrseParams& p) {
  p.validate();
  if (grid.dim() != 1) throw DimensionMismatch("qrse_asymmetry: grid must be one-dimensional");
  const double lo = grid.x(0), hi = grid.x(grid.size() - 1);
  const double reach = std::min(p.mu - lo, hi - p.mu);
  if (!(reach > 0.0)) throw InvalidArgument("qrse_asymmetry: mu lies outside the grid");
  // f(x) = exp(kernel(x)) / Zc with Zc = sum_k w_k exp(kernel_k).
  std::vector<double> lw(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    lw[i] = qrse_log_kernel(grid.x(i), p) + std::log(grid.volume(i));
  const double log_zc = log_sum_exp(lw);
  const std::size_t n = 4096;
  const double dh = reach / static_cast<double>(n);
  CompensatedSum s;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = (static_cast<double>(i) + 0.5) * dh;
    const double a = std::exp(qrse_log_kernel(p.mu + h, p) - log_zc);
    const double b = std::exp(qrse_log_kernel(p.mu - h, p) - log_zc);
    s.add(std::abs(a - b) * dh);
  }
  return s.value();
}

/// Default fitting grid: 512 cells over [min - 5 sd, max + 5 sd].
inline StateGrid qrse_default_grid(std::span<const double> data, std::size_t cells = 512) {
  if (data.size() < 2) throw InvalidArgument("qrse_default_grid: need at least two observations");
  double lo = data[0], hi = data[0], mean = 0.0;
  for (double v : data) {
    if (!std::isfinite(v)) throw InvalidArgument("qrse_default_grid: non-finite observation");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v;
  }
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (double v : data) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(data.size() - 1));
  if (!(sd > 0.0)) throw InvalidArgument("qrse_default_grid: data have zero spread");
  return StateGrid::cells(lo - 5.0 * sd, hi + 5.0 * sd, cells);
}

/// Parameter family theta = (mu, T, alpha, S) over a fixed one-dimensional grid.
class QrseFamily {
 public:
  explicit QrseFamily(StateGrid grid) : grid_(std::move(grid)) {
    if (grid_.dim() != 1) throw DimensionMismatch("QrseFamily: grid must be one-dimensional");
    if (grid_.size() < 2) throw InvalidArgument("QrseFamily: grid needs at least two cells");
    log_width_.resize(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (!(grid_.volume(i) > 0.0)) throw InvalidArgument("QrseFamily: cell widths must be > 0");
      log_width_[i] = std::log(grid_.volume(i));
    }
  }

  const StateGrid& grid() const noexcept { return grid_; }
  std::size_t state_count() const noexcept { return grid_.size(); }
  std::size_t parameter_count() const noexcept { return 4; }
  static std::vector<std::string> parameter_names() { return {"mu", "T", "alpha", "S"}; }

  std::vector<double> log_equilibrium(std::span<const double> theta) const {
    const auto p = QrseParams::from_vector(theta);
    p.validate();
    std::vector<double> lw(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) lw[i] = qrse_log_kernel(grid_.x(i), p) + log_width_[i];
    const double lz = log_sum_exp(lw);
    for (auto& v : lw) v -= lz;
    return lw;
  }

 private:
  StateGrid grid_;
  std::vector<double> log_width_;
};

struct QrseFit {
  ParameterPosterior posterior;
  QrseParams map;
  double feedback = 0.0;  ///< achieved feedback moment at the MAP
  bool truncated = false;
  std::vector<std::string> warnings;
};

inline QrseFit fit_qrse(const QrseFamily& family, const ObservedCounts& counts, const HyperPrior& hyper,
                        const McmcConfig& mcmc, std::uint64_t seed,
                        const ParameterSamplerOptions& options = {}) {
  if (hyper.size() != 4) throw DimensionMismatch("fit_qrse: hyperprior must cover (mu, T, alpha, S)");
  if (!(hyper[1].lower >= kMinTemperature))
    throw InvalidArgument("fit_qrse: the T hyperprior lower bound must be >= 1e-8");
  if (!(hyper[3].lower > 0.0)) throw InvalidArgument("fit_qrse: the S hyperprior lower bound must be > 0");
  QrseFit fit;
  fit.posterior = sample_parameter_posterior(family, counts, hyper, EvidenceMode::saddle, mcmc, seed, options);
  fit.map = QrseParams::from_vector(fit.posterior.map);
  const auto d = qrse_distribution(family.grid(), fit.map);
  fit.feedback = qrse_feedback_moment(family.grid(), d.q, fit.map);
  fit.truncated = d.truncated;
  fit.warnings = d.warnings;
  return fit;
}

}  // namespace meb::models
