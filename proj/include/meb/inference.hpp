#pragma once

// Samplers at the two levels of the hierarchy: over hypothesis
// distributions q for known constraints, and over constraint parameters
// (theta, sigma) with q integrated out, either by the saddle-point
// approximation or by dense simplex quadrature.

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meb/cme.hpp"
#include "meb/error.hpp"
#include "meb/mcmc.hpp"
#include "meb/numeric.hpp"
#include "meb/posterior.hpp"
#include "meb/prob.hpp"

namespace meb {

// ---------------------------------------------------------------------------
// Hyperpriors

enum class PriorScale { uniform, log_uniform };

inline const char* to_string(PriorScale s) {
  return s == PriorScale::uniform ? "uniform" : "log-uniform";
}

struct ParameterPrior {
  std::string name;
  PriorScale scale = PriorScale::uniform;
  double lower = 0.0;
  double upper = 1.0;
};

/// Independent interval priors. Sampling runs in coordinates u where every
/// prior is flat on a box: u = theta for uniform, u = log theta for
/// log-uniform (density proportional to 1/theta).
class HyperPrior {
 public:
  explicit HyperPrior(std::vector<ParameterPrior> params) : params_(std::move(params)) {
    if (params_.empty()) throw InvalidArgument("HyperPrior: no parameters");
    for (const auto& p : params_) {
      if (!std::isfinite(p.lower) || !std::isfinite(p.upper) || !(p.lower < p.upper))
        throw InvalidArgument("HyperPrior: parameter '" + p.name +
                              "' needs finite bounds with lower < upper");
      if (p.scale == PriorScale::log_uniform && !(p.lower > 0.0))
        throw InvalidArgument("HyperPrior: log-uniform parameter '" + p.name +
                              "' needs lower > 0");
    }
  }

  std::size_t size() const noexcept { return params_.size(); }
  const ParameterPrior& operator[](std::size_t i) const { return params_[i]; }
  const std::vector<ParameterPrior>& parameters() const noexcept { return params_; }
  std::vector<std::string> names() const {
    std::vector<std::string> n;
    for (const auto& p : params_) n.push_back(p.name);
    return n;
  }

  bool contains(std::span<const double> theta) const {
    for (std::size_t i = 0; i < size(); ++i)
      if (!(theta[i] >= params_[i].lower && theta[i] <= params_[i].upper)) return false;
    return true;
  }

  /// Normalized log density in natural coordinates; -inf outside the box.
  double log_density(std::span<const double> theta) const {
    check(theta);
    if (!contains(theta)) return -kInf;
    double lp = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& p = params_[i];
      if (p.scale == PriorScale::uniform)
        lp -= std::log(p.upper - p.lower);
      else
        lp -= std::log(theta[i]) + std::log(std::log(p.upper / p.lower));
    }
    return lp;
  }

  std::vector<double> to_sampling(std::span<const double> theta) const {
    check(theta);
    std::vector<double> u(size());
    for (std::size_t i = 0; i < size(); ++i)
      u[i] = params_[i].scale == PriorScale::uniform ? theta[i] : std::log(theta[i]);
    return u;
  }

  std::vector<double> from_sampling(std::span<const double> u) const {
    check(u);
    std::vector<double> theta(size());
    for (std::size_t i = 0; i < size(); ++i)
      theta[i] = params_[i].scale == PriorScale::uniform ? u[i] : std::exp(u[i]);
    return theta;
  }

  double sampling_lower(std::size_t i) const {
    return params_[i].scale == PriorScale::uniform ? params_[i].lower : std::log(params_[i].lower);
  }
  double sampling_upper(std::size_t i) const {
    return params_[i].scale == PriorScale::uniform ? params_[i].upper : std::log(params_[i].upper);
  }

  bool contains_sampling(std::span<const double> u) const {
    for (std::size_t i = 0; i < size(); ++i)
      if (!(u[i] >= sampling_lower(i) && u[i] <= sampling_upper(i))) return false;
    return true;
  }

  /// Midpoint of each interval in sampling coordinates.
  std::vector<double> center() const {
    std::vector<double> u(size());
    for (std::size_t i = 0; i < size(); ++i) u[i] = 0.5 * (sampling_lower(i) + sampling_upper(i));
    return from_sampling(u);
  }

 private:
  void check(std::span<const double> v) const {
    if (v.size() != size()) throw DimensionMismatch("HyperPrior: parameter vector length");
  }

  std::vector<ParameterPrior> params_;
};

// ---------------------------------------------------------------------------
// Box-constrained maximization used for MAP search and polishing.

struct MaximizeOptions {
  double objective_tolerance = 1e-10;
  int max_sweeps = 2000;
  int newton_iterations = 20;
};

struct MaximizeResult {
  std::vector<double> point;
  double value = -kInf;
  int sweeps = 0;
};

namespace detail {

/// Coordinate ascent with Brent line maximization on each coordinate,
/// followed by Newton refinement on finite-difference derivatives over the
/// coordinates not pinned to a bound.
template <class Objective>
MaximizeResult maximize_in_box(Objective&& f, std::vector<double> x, std::span<const double> lower,
                               std::span<const double> upper, const MaximizeOptions& opt) {
  const std::size_t d = x.size();
  for (std::size_t i = 0; i < d; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  double fx = f(std::span<const double>(x));
  if (!std::isfinite(fx)) throw InvalidArgument("maximize_in_box: objective is not finite at the start");
  std::vector<double> radius(d);
  for (std::size_t i = 0; i < d; ++i) radius[i] = 0.05 * (upper[i] - lower[i]);

  MaximizeResult res;
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    const double before = fx;
    for (std::size_t i = 0; i < d; ++i) {
      const double width = upper[i] - lower[i];
      const double lo = std::max(lower[i], x[i] - radius[i]);
      const double hi = std::min(upper[i], x[i] + radius[i]);
      std::vector<double> trial = x;
      auto line = [&](double v) {
        trial[i] = v;
        const double val = f(std::span<const double>(trial));
        return std::isfinite(val) ? -val : 1e300;
      };
      std::uintmax_t max_iter = 200;
      const auto [best, neg] = boost::math::tools::brent_find_minima(line, lo, hi, 52, max_iter);
      if (-neg > fx) {
        const double moved = std::abs(best - x[i]);
        x[i] = best;
        fx = -neg;
        const bool at_edge = (best - lo < 1e-6 * (hi - lo) && lo > lower[i]) ||
                             (hi - best < 1e-6 * (hi - lo) && hi < upper[i]);
        radius[i] = at_edge ? 2.0 * radius[i] : std::max(4.0 * moved, 1e-9 * width);
      } else {
        radius[i] = std::max(0.5 * radius[i], 1e-9 * width);
      }
    }
    res.sweeps = sweep + 1;
    if (fx - before < opt.objective_tolerance) break;
  }

  // Newton refinement over free coordinates.
  for (int it = 0; it < opt.newton_iterations; ++it) {
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < d; ++i) {
      const double w = upper[i] - lower[i];
      if (x[i] - lower[i] > 1e-7 * w && upper[i] - x[i] > 1e-7 * w) free.push_back(i);
    }
    if (free.empty()) break;
    const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
    std::vector<double> h(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      const std::size_t i = free[a];
      h[a] = std::max(1e-5 * std::abs(x[i]), 1e-7 * (upper[i] - lower[i]));
    }
    auto eval = [&](std::size_t i, double di, std::size_t j, double dj) {
      std::vector<double> t = x;
      t[i] += di;
      t[j] += dj;
      return f(std::span<const double>(t));
    };
    Eigen::VectorXd g(nf);
    Eigen::MatrixXd hess(nf, nf);
    bool ok = true;
    for (Eigen::Index a = 0; a < nf && ok; ++a) {
      const std::size_t i = free[a];
      const double fp = eval(i, h[a], i, 0.0), fm = eval(i, -h[a], i, 0.0);
      g[a] = (fp - fm) / (2.0 * h[a]);
      hess(a, a) = (fp - 2.0 * fx + fm) / (h[a] * h[a]);
      ok = std::isfinite(fp) && std::isfinite(fm);
      for (Eigen::Index b = 0; b < a && ok; ++b) {
        const std::size_t j = free[b];
        const double fpp = eval(i, h[a], j, h[b]), fpm = eval(i, h[a], j, -h[b]);
        const double fmp = eval(i, -h[a], j, h[b]), fmm = eval(i, -h[a], j, -h[b]);
        hess(a, b) = hess(b, a) = (fpp - fpm - fmp + fmm) / (4.0 * h[a] * h[b]);
        ok = std::isfinite(fpp + fpm + fmp + fmm);
      }
    }
    if (!ok) break;
    Eigen::LLT<Eigen::MatrixXd> llt(-hess);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = llt.solve(g);
    std::vector<double> cand = x;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const std::size_t i = free[a];
      cand[i] = std::clamp(x[i] + step[a], lower[i], upper[i]);
    }
    const double fc = f(std::span<const double>(cand));
    if (!(std::isfinite(fc) && fc >= fx - 1e-13 * std::max(1.0, std::abs(fx)))) break;
    double moved = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      moved = std::max(moved, std::abs(cand[i] - x[i]) / (upper[i] - lower[i]));
    x = std::move(cand);
    fx = fc;
    if (moved < 1e-15) break;
  }
  res.point = std::move(x);
  res.value = fx;
  return res;
}

/// Finite-difference Hessian of f at x, step h_i per coordinate.
template <class Objective>
Eigen::MatrixXd numeric_hessian(Objective&& f, std::span<const double> x, std::span<const double> h) {
  const std::size_t d = x.size();
  std::vector<double> t(x.begin(), x.end());
  const double f0 = f(std::span<const double>(t));
  Eigen::MatrixXd hess(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    t[i] = x[i] + h[i];
    const double fp = f(std::span<const double>(t));
    t[i] = x[i] - h[i];
    const double fm = f(std::span<const double>(t));
    t[i] = x[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (std::size_t j = 0; j < i; ++j) {
      double acc = 0.0;
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          t[i] = x[i] + si * h[i];
          t[j] = x[j] + sj * h[j];
          acc += si * sj * f(std::span<const double>(t));
        }
      t[i] = x[i];
      t[j] = x[j];
      hess(i, j) = hess(j, i) = acc / (4.0 * h[i] * h[j]);
    }
  }
  return hess;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Hypothesis-level sampler

/// Random-walk Metropolis over q in multinomial-logit coordinates anchored
/// at the last cell, z_k = log(q_k / q_K). The log-Jacobian sum_k log q_k of
/// the map z -> (q_1..q_{K-1}) is added so the chain targets the flat-measure
/// posterior density of log_posterior_q.
inline ChainResult sample_hypothesis_posterior(const ObservedCounts& counts,
                                               const Constraint* constraint,
                                               const McmcConfig& mcmc, std::uint64_t seed) {
  const std::size_t k = counts.size();
  if (k < 2) throw InvalidArgument("sample_hypothesis_posterior: need K >= 2");
  const auto c = detail::penalty_or_zero(k, constraint);
  const double dc = detail::data_constant(counts);
  std::vector<double> log_q(k);

  auto to_log_q = [&](std::span<const double> z) {
    LogSumExp lse;
    lse.add(0.0);
    for (double v : z) lse.add(v);
    const double lz = lse.value();
    for (std::size_t i = 0; i + 1 < k; ++i) log_q[i] = z[i] - lz;
    log_q[k - 1] = -lz;
  };
  auto target = [&](std::span<const double> z) {
    for (double v : z)
      if (!std::isfinite(v)) return -kInf;
    to_log_q(z);
    double h = 0.0, lin = 0.0, like = 0.0, jac = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double qi = std::exp(log_q[i]);
      h -= qi * log_q[i];
      lin += c[i] * qi;
      like += static_cast<double>(counts[i]) * log_q[i];
      jac += log_q[i];
    }
    return h - lin + like - dc + jac;
  };
  auto output = [&](std::span<const double> z) {
    to_log_q(z);
    std::vector<double> q(k);
    for (std::size_t i = 0; i < k; ++i) q[i] = std::exp(log_q[i]);
    return q;
  };
  auto score = [](std::span<const double>, double lp) { return lp; };

  const Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(k - 1, k - 1);
  auto chain = random_walk_metropolis(target, std::vector<double>(k - 1, 0.0), cov, mcmc, seed,
                                      output, score);
  chain.names.clear();
  for (std::size_t i = 0; i < k; ++i) chain.names.push_back("q" + std::to_string(i));
  return chain;
}

// ---------------------------------------------------------------------------
// Parameter-level sampler

/// A parametric family of equilibrium distributions over a fixed grid.
/// log_equilibrium(theta) returns the normalized log q_hat_theta.
template <class F>
concept ParameterFamily = requires(const F& f, std::span<const double> theta) {
  { f.state_count() } -> std::convertible_to<std::size_t>;
  { f.log_equilibrium(theta) } -> std::convertible_to<std::vector<double>>;
};

/// A family whose equilibrium is the CME distribution of an explicit
/// residual constraint, which is what the exact (quadrature) mode needs.
template <class F>
concept ConstrainedFamily = ParameterFamily<F> && requires(const F& f, std::span<const double> theta) {
  { f.constraint(theta) } -> std::convertible_to<Constraint>;
};

enum class EvidenceMode { saddle, exact };

inline const char* to_string(EvidenceMode m) { return m == EvidenceMode::saddle ? "saddle" : "exact"; }

/// Returns a callable theta -> -N H[p || q_hat_theta] for fixed counts. A
/// family may provide saddle_evaluator(counts) to precompute what only
/// depends on the counts; otherwise the dense equilibrium is used.
template <ParameterFamily F>
auto saddle_evaluator(const F& family, const ObservedCounts& counts) {
  if constexpr (requires { family.saddle_evaluator(counts); }) {
    return family.saddle_evaluator(counts);
  } else {
    return [&family, &counts](std::span<const double> theta) {
      return neg_scaled_divergence(counts, family.log_equilibrium(theta));
    };
  }
}

template <ParameterFamily F>
double saddle_log_likelihood(const F& family, const ObservedCounts& counts,
                             std::span<const double> theta) {
  return saddle_evaluator(family, counts)(theta);
}

struct ParameterSamplerOptions {
  /// Starting point in natural coordinates; defaults to the prior box center.
  std::optional<std::vector<double>> start;
  /// Maximize the posterior before sampling and start the chain there.
  bool optimize_start = true;
  /// Lattice resolution for exact mode; 0 selects the default for K.
  std::size_t quadrature_resolution = 0;
  MaximizeOptions polish;
};

struct ParameterPosterior {
  ChainResult chain;
  std::vector<double> map;            ///< polished maximum of prior x evidence
  double map_log_posterior = -kInf;
  EvidenceMode mode = EvidenceMode::saddle;
  std::size_t quadrature_resolution = 0;
};

/// Metropolis over the parameters of `family` targeting
/// P[theta] * exp(-N H[p || q_hat_theta]) (saddle) or P[theta] times the
/// brute-force evidence (exact, K <= 4). Bounds are enforced by rejection.
template <ParameterFamily F>
ParameterPosterior sample_parameter_posterior(const F& family, const ObservedCounts& counts,
                                              const HyperPrior& hyper, EvidenceMode mode,
                                              const McmcConfig& mcmc, std::uint64_t seed,
                                              const ParameterSamplerOptions& options = {}) {
  if (family.state_count() != counts.size())
    throw DimensionMismatch("sample_parameter_posterior: counts and family grid differ in K");
  ParameterPosterior result;
  result.mode = mode;
  std::size_t resolution = 0;
  if (mode == EvidenceMode::exact) {
    if constexpr (!ConstrainedFamily<F>) {
      throw UnsupportedDimension("sample_parameter_posterior: exact mode needs a residual-constraint family");
    } else {
      if (counts.size() > kMaxQuadratureStates)
        throw UnsupportedDimension("sample_parameter_posterior: exact mode needs K <= 4, got K = " +
                                   std::to_string(counts.size()));
      resolution = options.quadrature_resolution > 0 ? options.quadrature_resolution
                                                     : default_quadrature_resolution(counts.size());
    }
  }
  result.quadrature_resolution = resolution;

  auto saddle = saddle_evaluator(family, counts);
  auto log_likelihood = [&](std::span<const double> theta) -> double {
    if (mode == EvidenceMode::saddle) return saddle(theta);
    if constexpr (ConstrainedFamily<F>) {
      const Constraint c = family.constraint(theta);
      return brute_force_log_evidence(counts, &c, resolution).log_evidence;
    }
    return -kInf;
  };
  auto log_posterior = [&](std::span<const double> theta) -> double {
    const double lp = hyper.log_density(theta);
    if (!std::isfinite(lp)) return -kInf;
    const double ll = log_likelihood(theta);
    return std::isfinite(ll) ? lp + ll : -kInf;
  };

  const std::size_t d = hyper.size();
  std::vector<double> lower(d), upper(d);
  for (std::size_t i = 0; i < d; ++i) {
    lower[i] = hyper[i].lower;
    upper[i] = hyper[i].upper;
  }

  std::vector<double> start = options.start ? *options.start : hyper.center();
  if (start.size() != d) throw DimensionMismatch("sample_parameter_posterior: start length");
  if (!hyper.contains(start)) throw InvalidArgument("sample_parameter_posterior: start outside the prior box");
  MaximizeResult pre;
  pre.point = start;
  pre.value = log_posterior(start);
  if (options.optimize_start) {
    MaximizeOptions quick = options.polish;
    quick.objective_tolerance = 1e-6;
    quick.max_sweeps = 200;
    quick.newton_iterations = 5;
    pre = detail::maximize_in_box(log_posterior, start, lower, upper, quick);
  }

  // Target in sampling coordinates: flat prior on the box.
  auto target = [&](std::span<const double> u) -> double {
    if (!hyper.contains_sampling(u)) return -kInf;
    const auto theta = hyper.from_sampling(u);
    return log_likelihood(theta);
  };
  auto output = [&](std::span<const double> u) { return hyper.from_sampling(u); };
  auto score = [&](std::span<const double> u, double) {
    const auto theta = hyper.from_sampling(u);
    return log_posterior(theta);
  };

  const auto u0 = hyper.to_sampling(pre.point);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> h(d);
  for (std::size_t i = 0; i < d; ++i)
    h[i] = 1e-4 * (hyper.sampling_upper(i) - hyper.sampling_lower(i));
  auto unbounded = [&](std::span<const double> u) {
    try {
      return log_likelihood(hyper.from_sampling(u));
    } catch (const Error&) {
      return -kInf;
    }
  };
  const Eigen::MatrixXd hess = detail::numeric_hessian(unbounded, u0, h);
  bool have_cov = false;
  if (hess.allFinite()) {
    Eigen::LLT<Eigen::MatrixXd> llt(-hess);
    if (llt.info() == Eigen::Success) {
      cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
      have_cov = cov.allFinite();
    }
  }
  if (!have_cov) {
    cov.setZero();
    for (std::size_t i = 0; i < d; ++i) {
      const double width = hyper.sampling_upper(i) - hyper.sampling_lower(i);
      const double hii = hess(i, i);
      cov(i, i) = (std::isfinite(hii) && hii < 0.0) ? std::min(-1.0 / hii, 1e-2 * width * width)
                                                     : 1e-4 * width * width;
    }
  }

  result.chain = random_walk_metropolis(target, u0, cov, mcmc, seed, output, score);
  result.chain.names = hyper.names();

  std::vector<double> best = pre.point;
  if (result.chain.best_score > pre.value) best = result.chain.best_point;
  const auto polished = detail::maximize_in_box(log_posterior, best, lower, upper, options.polish);
  result.map = polished.point;
  result.map_log_posterior = polished.value;
  return result;
}

}  // namespace meb
