#pragma once

// Adaptive random-walk Metropolis with a frozen kernel after burn-in, and
// chain summaries (means, batch-means Monte Carlo standard errors,
// quantiles).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "meb/error.hpp"
#include "meb/numeric.hpp"

namespace meb {

struct McmcConfig {
  std::size_t burn_in = 5000;
  std::size_t samples = 20000;
  std::size_t thin = 1;
  double target_acceptance = 0.3;
  /// Proposal scale multiplying the Cholesky factor of the proposal
  /// covariance; 0 selects 2.38 / sqrt(d).
  double initial_scale = 0.0;
  bool adapt_covariance = true;

  void validate() const {
    if (samples < 2) throw InvalidArgument("McmcConfig: samples must be >= 2");
    if (thin < 1) throw InvalidArgument("McmcConfig: thin must be >= 1");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
      throw InvalidArgument("McmcConfig: target_acceptance must lie in (0, 1)");
    if (initial_scale < 0.0 || !std::isfinite(initial_scale))
      throw InvalidArgument("McmcConfig: initial_scale must be finite and >= 0");
  }
};

struct TuningRecord {
  double scale = 0.0;
  std::vector<double> proposal_covariance;  ///< row-major d x d
  double burn_in_acceptance = 0.0;
};

struct ChainResult {
  std::vector<std::string> names;
  std::vector<std::vector<double>> samples;
  std::vector<double> log_density;
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
  TuningRecord tuning;
  std::vector<double> best_point;  ///< highest score visited, output coordinates
  double best_score = -kInf;

  std::size_t dimension() const { return samples.empty() ? names.size() : samples.front().size(); }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> c;
    c.reserve(samples.size());
    for (const auto& s : samples) c.push_back(s[j]);
    return c;
  }

  std::vector<double> mean() const;
  std::vector<double> mc_standard_error() const;
  double quantile(std::size_t j, double p) const;
};

/// Monte Carlo standard error of the mean by non-overlapping batch means
/// with floor(sqrt(n)) batches.
inline double batch_means_standard_error(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) throw InvalidArgument("batch_means_standard_error: need at least 4 draws");
  const std::size_t b = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t m = n / b;
  const std::size_t skip = n - b * m;
  std::vector<double> means(b);
  for (std::size_t i = 0; i < b; ++i) {
    CompensatedSum s;
    for (std::size_t j = 0; j < m; ++j) s.add(x[skip + i * m + j]);
    means[i] = s.value() / static_cast<double>(m);
  }
  double mu = 0.0;
  for (double v : means) mu += v;
  mu /= static_cast<double>(b);
  double ss = 0.0;
  for (double v : means) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(b - 1) / static_cast<double>(b));
}

inline std::vector<double> ChainResult::mean() const {
  std::vector<double> mu(dimension(), 0.0);
  for (std::size_t j = 0; j < mu.size(); ++j) {
    CompensatedSum s;
    for (const auto& v : samples) s.add(v[j]);
    mu[j] = s.value() / static_cast<double>(samples.size());
  }
  return mu;
}

inline std::vector<double> ChainResult::mc_standard_error() const {
  std::vector<double> se(dimension());
  for (std::size_t j = 0; j < se.size(); ++j) se[j] = batch_means_standard_error(column(j));
  return se;
}

/// Empirical quantile with linear interpolation between order statistics.
inline double ChainResult::quantile(std::size_t j, double p) const {
  auto c = column(j);
  if (c.empty()) throw InvalidArgument("ChainResult::quantile: empty chain");
  std::sort(c.begin(), c.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(c.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, c.size() - 1);
  return c[lo] + (pos - static_cast<double>(lo)) * (c[hi] - c[lo]);
}

namespace detail {

inline Eigen::MatrixXd safe_cholesky(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::VectorXd d = cov.diagonal().cwiseMax(1e-300).cwiseSqrt();
  return d.asDiagonal();
}

}  // namespace detail

/// Runs adaptive random-walk Metropolis on R^d.
///
/// During burn-in the proposal scale follows a Robbins-Monro recursion
/// toward cfg.target_acceptance and, with adapt_covariance, the proposal
/// covariance is replaced by the empirical covariance of the burn-in path
/// at one half and three quarters of burn-in. Afterwards the kernel is
/// fixed, so the retained draws target log_target exactly.
///
/// `output(u)` maps a state to the stored sample; `score(u, log_target)`
/// ranks states for the best-point tracker, which covers every visited
/// state including burn-in.
template <class LogTarget, class Output, class Score>
ChainResult random_walk_metropolis(LogTarget&& log_target, std::vector<double> start,
                                   const Eigen::MatrixXd& proposal_covariance,
                                   const McmcConfig& cfg, std::uint64_t seed,
                                   Output&& output, Score&& score) {
  cfg.validate();
  const std::size_t d = start.size();
  if (d == 0) throw InvalidArgument("random_walk_metropolis: empty state");
  if (proposal_covariance.rows() != static_cast<Eigen::Index>(d) ||
      proposal_covariance.cols() != static_cast<Eigen::Index>(d))
    throw DimensionMismatch("random_walk_metropolis: proposal covariance is not d x d");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Eigen::MatrixXd cov = proposal_covariance;
  Eigen::MatrixXd chol = detail::safe_cholesky(cov);
  const double default_scale = 2.38 / std::sqrt(static_cast<double>(d));
  double log_scale = std::log(cfg.initial_scale > 0.0 ? cfg.initial_scale : default_scale);

  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(start.data(), static_cast<Eigen::Index>(d));
  double lp = log_target(std::span<const double>(start));
  if (!std::isfinite(lp))
    throw InvalidArgument("random_walk_metropolis: target is -inf or non-finite at the start state");

  ChainResult out;
  out.seed = seed;
  out.best_score = score(std::span<const double>(start), lp);
  out.best_point = output(std::span<const double>(start));

  std::vector<double> buf(d);
  Eigen::VectorXd z(d), y(d);

  // Running moments of the burn-in path for covariance adaptation.
  Eigen::VectorXd run_mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd run_m2 = Eigen::MatrixXd::Zero(d, d);
  std::size_t run_n = 0, run_accepts = 0;
  std::size_t adapt_clock = 0;
  std::size_t burn_accepts = 0;

  const std::size_t burn = cfg.burn_in;
  const std::size_t total = burn + cfg.samples * cfg.thin;
  std::size_t kept_accepts = 0;
  out.samples.reserve(cfg.samples);
  out.log_density.reserve(cfg.samples);

  for (std::size_t it = 0; it < total; ++it) {
    for (std::size_t i = 0; i < d; ++i) z[i] = normal(rng);
    y = x + std::exp(log_scale) * (chol * z);
    std::copy(y.data(), y.data() + d, buf.begin());
    const double lq = log_target(std::span<const double>(buf));
    const double log_u = std::log(uniform(rng));
    const double log_ratio = std::isfinite(lq) ? lq - lp : -kInf;
    const bool accept = log_u < log_ratio;
    if (accept) {
      x = y;
      lp = lq;
      const double sc = score(std::span<const double>(buf), lq);
      if (sc > out.best_score) {
        out.best_score = sc;
        out.best_point = output(std::span<const double>(buf));
      }
    }

    if (it < burn) {
      if (accept) ++burn_accepts;
      const double alpha = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
      ++adapt_clock;
      log_scale += (alpha - cfg.target_acceptance) / std::pow(static_cast<double>(adapt_clock), 0.6);
      if (cfg.adapt_covariance && it >= burn / 4) {
        ++run_n;
        if (accept) ++run_accepts;
        const Eigen::VectorXd delta = x - run_mean;
        run_mean += delta / static_cast<double>(run_n);
        run_m2 += delta * (x - run_mean).transpose();
        const bool checkpoint = (it + 1 == burn / 2) || (it + 1 == (3 * burn) / 4);
        if (checkpoint && run_n > 2 * d + 2 && run_accepts >= 10 * d) {
          Eigen::MatrixXd emp = run_m2 / static_cast<double>(run_n - 1);
          const double ridge = 1e-10 * std::max(emp.diagonal().maxCoeff(), 1e-300);
          emp.diagonal().array() += ridge;
          Eigen::LLT<Eigen::MatrixXd> llt(emp);
          if (llt.info() == Eigen::Success) {
            cov = emp;
            chol = llt.matrixL();
            log_scale = std::log(default_scale);
            adapt_clock = 0;
          }
        }
      }
      continue;
    }

    if (accept) ++kept_accepts;
    if ((it - burn + 1) % cfg.thin == 0) {
      std::copy(x.data(), x.data() + d, buf.begin());
      out.samples.push_back(output(std::span<const double>(buf)));
      out.log_density.push_back(lp);
    }
  }

  const std::size_t kept_iterations = cfg.samples * cfg.thin;
  out.acceptance_rate = static_cast<double>(kept_accepts) / static_cast<double>(kept_iterations);
  out.tuning.scale = std::exp(log_scale);
  out.tuning.proposal_covariance.assign(cov.data(), cov.data() + d * d);
  out.tuning.burn_in_acceptance =
      burn > 0 ? static_cast<double>(burn_accepts) / static_cast<double>(burn) : 0.0;
  if (kept_accepts == 0)
    throw TuningFailure("random_walk_metropolis: no proposal accepted after burn-in (scale " +
                        std::to_string(out.tuning.scale) + ")");
  return out;
}

}  // namespace meb
