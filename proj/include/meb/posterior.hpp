#pragma once

// Posterior densities over hypothesis distributions q and the evidence
// obtained by integrating q out.
//
// With a constraint (G, sigma) the unnormalized log posterior of q is
//
//   H[q] - sum_k c_k q_k - N H[p || q],   c_k = sum_d (G[d][k] / sigma_d)^2,
//
// and the evidence is the integral of its exponential over the simplex.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "meb/cme.hpp"
#include "meb/error.hpp"
#include "meb/numeric.hpp"
#include "meb/prob.hpp"
#include "meb/simplex_quadrature.hpp"

namespace meb {

/// A residual model with known tolerances.
class Constraint {
 public:
  Constraint(ResidualModel model, ToleranceSpec tolerance)
      : model_(std::move(model)), tolerance_(std::move(tolerance)) {
    if (model_.dimension() != tolerance_.dimension())
      throw DimensionMismatch("Constraint: sigma length differs from residual dimension D");
  }

  const ResidualModel& model() const noexcept { return model_; }
  const ToleranceSpec& tolerance() const noexcept { return tolerance_; }
  std::size_t size() const noexcept { return model_.size(); }

  /// c_k = sum_d G[d][k]^2 / sigma_d^2.
  std::vector<double> cell_penalty() const {
    const auto lambda = tolerance_.multipliers();
    const auto& a = model_.squared();
    std::vector<double> c(model_.size(), 0.0);
    for (Eigen::Index k = 0; k < a.cols(); ++k)
      for (Eigen::Index d = 0; d < a.rows(); ++d) c[k] += lambda[d] * a(d, k);
    return c;
  }

  /// The CME distribution q_hat_{theta, sigma}.
  std::vector<double> log_q_hat() const {
    return gibbs_log_weights(model_, tolerance_.multipliers());
  }

  Constraint permuted(std::span<const std::size_t> perm) const {
    return Constraint(model_.permuted(perm), tolerance_);
  }

 private:
  ResidualModel model_;
  ToleranceSpec tolerance_;
};

namespace detail {

inline std::vector<double> penalty_or_zero(std::size_t k, const Constraint* c) {
  if (c == nullptr) return std::vector<double>(k, 0.0);
  if (c->size() != k) throw DimensionMismatch("constraint and counts differ in K");
  return c->cell_penalty();
}

/// log integrand at an interior or boundary point q, given the penalty and
/// the data-only constant sum_k n_k log p_k.
inline double log_integrand(std::span<const double> q, std::span<const double> penalty,
                            const ObservedCounts& counts, double data_constant) {
  double h = 0.0, lin = 0.0, like = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    h -= xlogx(q[k]);
    lin += penalty[k] * q[k];
    if (counts[k] > 0) {
      if (q[k] <= 0.0) return -kInf;
      like += static_cast<double>(counts[k]) * std::log(q[k]);
    }
  }
  return h - lin + like - data_constant;
}

inline double data_constant(const ObservedCounts& counts) {
  if (counts.total() == 0) return 0.0;
  const double log_n = std::log(static_cast<double>(counts.total()));
  CompensatedSum s;
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] > 0) {
      const double nk = static_cast<double>(counts[k]);
      s.add(nk * (std::log(nk) - log_n));
    }
  return s.value();
}

}  // namespace detail

/// Unnormalized log posterior of q: H[q] - c . q - N H[p || q].
/// Pass constraint = nullptr for the unconstrained entropy-favoring prior.
/// Returns -inf when q puts no mass on an observed cell.
inline double log_posterior_q(const SimplexDistribution& q, const ObservedCounts& counts,
                              const Constraint* constraint = nullptr) {
  if (q.size() != counts.size())
    throw DimensionMismatch("log_posterior_q: q and counts differ in K");
  const auto c = detail::penalty_or_zero(q.size(), constraint);
  return detail::log_integrand(q.weights(), c, counts, detail::data_constant(counts));
}

enum class PriorForm { direct, divergence };

/// The constrained entropy-favoring log prior in one of its two forms:
/// direct: H[q] - c . q; divergence: -H[q || q_hat]. They differ by
/// log Z, the log partition sum of q_hat.
inline double log_constrained_prior(const SimplexDistribution& q, const Constraint& constraint,
                                    PriorForm form) {
  if (q.size() != constraint.size())
    throw DimensionMismatch("log_constrained_prior: q and constraint differ in K");
  if (form == PriorForm::direct) {
    const auto c = constraint.cell_penalty();
    CompensatedSum s;
    for (std::size_t k = 0; k < q.size(); ++k) s.add(-xlogx(q[k]) - c[k] * q[k]);
    return s.value();
  }
  const auto log_q_hat = constraint.log_q_hat();
  CompensatedSum s;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] == 0.0) continue;
    if (log_q_hat[k] == -kInf) return -kInf;
    s.add(q[k] * (std::log(q[k]) - log_q_hat[k]));
  }
  return -s.value();
}

enum class EvidenceMethod { brute_force, saddle_point };

inline const char* to_string(EvidenceMethod m) {
  return m == EvidenceMethod::brute_force ? "brute-force" : "saddle-point";
}

struct EvidenceReport {
  double log_evidence = 0.0;
  EvidenceMethod method = EvidenceMethod::brute_force;
  std::size_t resolution = 0;  ///< lattice points per free dimension (brute force)
  std::size_t nodes = 0;
  std::vector<double> q_hat;   ///< saddle point only
  double divergence = 0.0;     ///< H[p || q_hat], saddle point only
  std::string note;
};

/// Default lattice resolution for dense simplex quadrature.
inline std::size_t default_quadrature_resolution(std::size_t k) {
  switch (k) {
    case 1:
    case 2: return 400;
    case 3: return 150;
    default: return 60;
  }
}

inline constexpr std::size_t kMinQuadratureResolution = 50;

/// log of the integral of exp(H[q] - c . q - N H[p || q]) over the simplex
/// under the flat measure, by midpoint quadrature on the Freudenthal
/// lattice. K must be at most 4.
inline EvidenceReport brute_force_log_evidence(const ObservedCounts& counts,
                                               const Constraint* constraint,
                                               std::size_t resolution) {
  const std::size_t k = counts.size();
  if (k > kMaxQuadratureStates)
    throw UnsupportedDimension("brute_force_log_evidence: dense simplex quadrature needs K <= 4, got K = " +
                               std::to_string(k));
  if (resolution < kMinQuadratureResolution)
    throw InvalidArgument("brute_force_log_evidence: resolution must be >= 50 points per dimension");
  const auto c = detail::penalty_or_zero(k, constraint);
  const double dc = detail::data_constant(counts);
  LogSumExp acc;
  std::size_t nodes = 0;
  for_each_simplex_node(k, resolution, [&](std::span<const double> q, double w) {
    acc.add(detail::log_integrand(q, c, counts, dc) + std::log(w));
    ++nodes;
  });
  EvidenceReport r;
  r.log_evidence = acc.value();
  r.method = EvidenceMethod::brute_force;
  r.resolution = resolution;
  r.nodes = nodes;
  r.note = "midpoint rule on the Freudenthal lattice of the simplex, flat measure on q_1..q_{K-1}";
  return r;
}

inline EvidenceReport brute_force_log_evidence(const ObservedCounts& counts,
                                               const Constraint* constraint = nullptr) {
  return brute_force_log_evidence(counts, constraint, default_quadrature_resolution(counts.size()));
}

/// Saddle-point evidence -N H[p || q_hat]. The q-independent Gaussian
/// curvature factor of the peak is not included.
inline EvidenceReport saddle_point_log_evidence(const ObservedCounts& counts,
                                                const Constraint* constraint = nullptr) {
  const std::size_t k = counts.size();
  std::vector<double> log_q;
  if (constraint != nullptr) {
    if (constraint->size() != k) throw DimensionMismatch("saddle_point_log_evidence: K mismatch");
    log_q = constraint->log_q_hat();
  } else {
    log_q.assign(k, -std::log(static_cast<double>(k)));
  }
  EvidenceReport r;
  r.method = EvidenceMethod::saddle_point;
  r.log_evidence = neg_scaled_divergence(counts, log_q);
  r.divergence = counts.total() > 0 ? -r.log_evidence / static_cast<double>(counts.total()) : 0.0;
  r.q_hat.resize(k);
  for (std::size_t i = 0; i < k; ++i) r.q_hat[i] = std::exp(log_q[i]);
  r.note = "exp(-N H[p||q_hat]); the Gaussian curvature prefactor 1/Z[q_hat] is dropped";
  return r;
}

/// Posterior mean of q by the same lattice quadrature as the brute-force
/// evidence.
inline std::vector<double> quadrature_posterior_mean(const ObservedCounts& counts,
                                                     const Constraint* constraint,
                                                     std::size_t resolution) {
  const std::size_t k = counts.size();
  const auto c = detail::penalty_or_zero(k, constraint);
  const double dc = detail::data_constant(counts);
  double peak = -kInf;
  for_each_simplex_node(k, resolution, [&](std::span<const double> q, double) {
    peak = std::max(peak, detail::log_integrand(q, c, counts, dc));
  });
  if (!std::isfinite(peak)) throw InvalidArgument("quadrature_posterior_mean: posterior is -inf everywhere");
  std::vector<CompensatedSum> num(k);
  CompensatedSum den;
  for_each_simplex_node(k, resolution, [&](std::span<const double> q, double) {
    const double w = std::exp(detail::log_integrand(q, c, counts, dc) - peak);
    den.add(w);
    for (std::size_t i = 0; i < k; ++i) num[i].add(w * q[i]);
  });
  std::vector<double> mean(k);
  for (std::size_t i = 0; i < k; ++i) mean[i] = num[i].value() / den.value();
  return mean;
}

namespace detail {

/// Root in t of -t + a e^{-t} = b (a >= 0); the left side decreases in t.
inline double solve_stationary_log(double a, double b) {
  if (a == 0.0) return -b;
  double lo = -b - 1.0;
  double hi = std::max(-b + 1.0, std::log(a) + 1.0);
  double t = std::clamp(std::log(a) - std::log(std::max(b, 1.0)), lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double e = a * std::exp(-t);
    const double phi = -t + e - b;
    if (phi > 0.0) lo = t; else hi = t;
    if (phi == 0.0 || hi - lo <= 1e-15 * std::max(1.0, std::abs(t))) break;
    double next = t - phi / (-1.0 - e);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    t = next;
  }
  return t;
}

}  // namespace detail

/// Maximizer over the simplex of the log posterior H[q] - c . q + sum n log q.
/// The stationarity conditions -log q_k - 1 - c_k + n_k / q_k = nu decouple
/// for fixed nu; nu is then found so that the q_k sum to one.
inline SimplexDistribution map_hypothesis(const ObservedCounts& counts,
                                          const Constraint* constraint = nullptr) {
  const std::size_t k = counts.size();
  const auto c = detail::penalty_or_zero(k, constraint);
  std::vector<double> t(k);
  // log sum_k q_k(nu) and its derivative in nu.
  auto evaluate = [&](double nu, double& deriv) {
    LogSumExp lse;
    CompensatedSum d;
    for (std::size_t i = 0; i < k; ++i) {
      const double a = static_cast<double>(counts[i]);
      t[i] = detail::solve_stationary_log(a, nu + 1.0 + c[i]);
      lse.add(t[i]);
    }
    const double ls = lse.value();
    for (std::size_t i = 0; i < k; ++i) {
      const double a = static_cast<double>(counts[i]);
      const double qi = std::exp(t[i] - ls);
      d.add(-qi / (1.0 + a * std::exp(-t[i])));
    }
    deriv = d.value();
    return ls;
  };
  // nu for N = 0 as a start.
  std::vector<double> start(k);
  for (std::size_t i = 0; i < k; ++i) start[i] = -1.0 - c[i];
  double nu = log_sum_exp(start);
  double deriv = 0.0;
  double f = evaluate(nu, deriv);
  double lo = nu, hi = nu;
  double step = 1.0;
  if (f > 0.0) {
    while (evaluate(hi, deriv) > 0.0) { lo = hi; hi += step; step *= 2.0; }
  } else {
    while (evaluate(lo, deriv) < 0.0) { hi = lo; lo -= step; step *= 2.0; }
  }
  nu = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    f = evaluate(nu, deriv);
    if (f > 0.0) lo = nu; else hi = nu;
    if (std::abs(f) < 1e-15 || hi - lo < 1e-15 * std::max(1.0, std::abs(nu))) break;
    double next = nu - f / deriv;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    nu = next;
  }
  evaluate(nu, deriv);
  return SimplexDistribution::from_log_weights(t);
}

}  // namespace meb
