#pragma once

// Constrained maximum entropy over a finite grid with expected
// squared-residual constraints.
//
// For a D x K residual matrix G and multipliers lambda, the maximizer of
// H[q] subject to sum_k G[d][k]^2 q_k = s2_d has the Gibbs form
//
//   q_k = exp(-sum_d lambda_d G[d][k]^2) / Z(lambda),
//
// and lambda minimizes the convex dual
//
//   psi(lambda) = log Z(lambda) + lambda . s2,
//
// whose gradient is s2 - m(lambda) (m the achieved moments) and whose
// Hessian is the covariance of the squared residuals under q.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "meb/error.hpp"
#include "meb/numeric.hpp"
#include "meb/prob.hpp"

namespace meb {

/// D x K matrix of residuals g_theta,d[x_k] plus the parameters that
/// produced it.
class ResidualModel {
 public:
  explicit ResidualModel(Eigen::MatrixXd residuals,
                         std::vector<double> theta = {})
      : g_(std::move(residuals)), theta_(std::move(theta)) {
    if (g_.rows() < 1 || g_.cols() < 1)
      throw InvalidArgument("ResidualModel: need D >= 1 and K >= 1");
    if (!g_.allFinite()) throw InvalidArgument("ResidualModel: non-finite residual");
    g2_ = g_.array().square().matrix();
  }

  /// One residual row per inner vector.
  static ResidualModel from_rows(const std::vector<std::vector<double>>& rows,
                                 std::vector<double> theta = {}) {
    if (rows.empty() || rows.front().empty())
      throw InvalidArgument("ResidualModel::from_rows: empty matrix");
    Eigen::MatrixXd g(rows.size(), rows.front().size());
    for (std::size_t d = 0; d < rows.size(); ++d) {
      if (rows[d].size() != rows.front().size())
        throw InvalidArgument("ResidualModel::from_rows: ragged rows");
      for (std::size_t k = 0; k < rows[d].size(); ++k) g(d, k) = rows[d][k];
    }
    return ResidualModel(std::move(g), std::move(theta));
  }

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(g_.rows()); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(g_.cols()); }
  const Eigen::MatrixXd& residuals() const noexcept { return g_; }
  const Eigen::MatrixXd& squared() const noexcept { return g2_; }
  const std::vector<double>& theta() const noexcept { return theta_; }

  ResidualModel permuted(std::span<const std::size_t> perm) const {
    if (perm.size() != size()) throw DimensionMismatch("ResidualModel::permuted: permutation length");
    Eigen::MatrixXd g(g_.rows(), g_.cols());
    for (std::size_t k = 0; k < perm.size(); ++k) g.col(k) = g_.col(perm[k]);
    return ResidualModel(std::move(g), theta_);
  }

 private:
  Eigen::MatrixXd g_;
  Eigen::MatrixXd g2_;
  std::vector<double> theta_;
};

/// Strictly positive tolerances sigma; the multipliers are lambda = 1/sigma^2
/// with no factor one half, so the Gibbs kernel is exp(-(g/sigma)^2).
class ToleranceSpec {
 public:
  explicit ToleranceSpec(std::vector<double> sigma) : sigma_(std::move(sigma)) {
    if (sigma_.empty()) throw InvalidArgument("ToleranceSpec: empty sigma");
    for (double s : sigma_)
      if (!(s > 0.0) || !std::isfinite(s))
        throw InvalidArgument("ToleranceSpec: sigma must be finite and > 0");
  }

  std::size_t dimension() const noexcept { return sigma_.size(); }
  const std::vector<double>& sigma() const noexcept { return sigma_; }
  std::vector<double> multipliers() const {
    std::vector<double> lambda(sigma_.size());
    for (std::size_t d = 0; d < sigma_.size(); ++d) lambda[d] = 1.0 / (sigma_[d] * sigma_[d]);
    return lambda;
  }

 private:
  std::vector<double> sigma_;
};

struct CmeSolution {
  std::vector<double> lambda{};
  SimplexDistribution q_hat;
  std::vector<double> achieved_moments{};
  std::vector<double> target_moments{};
  double log_partition = 0.0;  ///< log sum_k exp(-lambda . g_k^2)
  double dual_value = 0.0;     ///< log_partition + lambda . target
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;  ///< sup-norm of target - achieved
  std::vector<std::string> warnings{};
};

struct CmeOptions {
  double gradient_tolerance = 1e-10;
  int max_newton_iterations = 200;
  int max_gradient_steps = 500;
  double armijo_slope = 1e-4;
  double backtrack_shrink = 0.5;
};

namespace detail {

inline void check_lambda(const ResidualModel& model, std::span<const double> lambda) {
  if (lambda.size() != model.dimension())
    throw DimensionMismatch("multiplier vector length differs from residual dimension D");
  for (double l : lambda)
    if (!std::isfinite(l)) throw InvalidArgument("non-finite Lagrange multiplier");
}

/// Unnormalized exponent -lambda . g_k^2 for every cell.
inline std::vector<double> gibbs_exponents(const ResidualModel& model,
                                           std::span<const double> lambda) {
  check_lambda(model, lambda);
  const auto& a = model.squared();
  std::vector<double> e(model.size(), 0.0);
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    double v = 0.0;
    for (Eigen::Index d = 0; d < a.rows(); ++d) v -= lambda[d] * a(d, k);
    e[k] = v;
  }
  return e;
}

}  // namespace detail

/// log Z(lambda) = log sum_k exp(-lambda . g_k^2).
inline double log_partition(const ResidualModel& model, std::span<const double> lambda) {
  const auto e = detail::gibbs_exponents(model, lambda);
  return log_sum_exp(e);
}

/// Normalized log q_hat_k for the given multipliers.
inline std::vector<double> gibbs_log_weights(const ResidualModel& model,
                                             std::span<const double> lambda) {
  auto e = detail::gibbs_exponents(model, lambda);
  const double lz = log_sum_exp(e);
  for (double& v : e) v -= lz;
  return e;
}

/// The Gibbs (Legendre-transform) distribution q_hat for fixed multipliers.
/// Negative multipliers are accepted; they arise when a target exceeds the
/// uniform-distribution moment.
inline SimplexDistribution gibbs_from_multipliers(const ResidualModel& model,
                                                  std::span<const double> lambda) {
  return SimplexDistribution::from_log_weights(detail::gibbs_exponents(model, lambda));
}

/// m_d = sum_k G[d][k]^2 q_k.
inline std::vector<double> achieved_moments(const SimplexDistribution& q,
                                            const ResidualModel& model) {
  if (q.size() != model.size())
    throw DimensionMismatch("achieved_moments: q and residual model differ in K");
  const auto& a = model.squared();
  std::vector<double> m(model.dimension());
  for (Eigen::Index d = 0; d < a.rows(); ++d) {
    CompensatedSum s;
    for (Eigen::Index k = 0; k < a.cols(); ++k) s.add(a(d, k) * q[k]);
    m[d] = s.value();
  }
  return m;
}

/// psi(lambda) = log Z(lambda) + lambda . targets.
inline double dual_objective(const ResidualModel& model, std::span<const double> lambda,
                             std::span<const double> targets) {
  if (targets.size() != model.dimension())
    throw DimensionMismatch("dual_objective: target length differs from D");
  double v = log_partition(model, lambda);
  for (std::size_t d = 0; d < targets.size(); ++d) v += lambda[d] * targets[d];
  return v;
}

/// Analytic dual gradient targets - m(lambda).
inline std::vector<double> dual_gradient(const ResidualModel& model,
                                         std::span<const double> lambda,
                                         std::span<const double> targets) {
  if (targets.size() != model.dimension())
    throw DimensionMismatch("dual_gradient: target length differs from D");
  const auto m = achieved_moments(gibbs_from_multipliers(model, lambda), model);
  std::vector<double> g(m.size());
  for (std::size_t d = 0; d < m.size(); ++d) g[d] = targets[d] - m[d];
  return g;
}

namespace detail {

struct DualState {
  Eigen::VectorXd lambda;
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  std::vector<double> log_q;
};

/// Evaluates psi, its gradient, and Hessian over the active rows of A.
inline DualState evaluate_dual(const Eigen::MatrixXd& a, const Eigen::VectorXd& targets,
                               const Eigen::VectorXd& lambda) {
  const Eigen::Index k_cells = a.cols();
  DualState st;
  st.lambda = lambda;
  st.log_q.resize(k_cells);
  const Eigen::VectorXd expo = -(a.transpose() * lambda);
  double mx = -kInf;
  for (Eigen::Index k = 0; k < k_cells; ++k) mx = std::max(mx, expo[k]);
  CompensatedSum zs;
  for (Eigen::Index k = 0; k < k_cells; ++k) zs.add(std::exp(expo[k] - mx));
  const double lz = mx + std::log(zs.value());
  Eigen::VectorXd q(k_cells);
  for (Eigen::Index k = 0; k < k_cells; ++k) {
    st.log_q[k] = expo[k] - lz;
    q[k] = std::exp(st.log_q[k]);
  }
  q /= q.sum();
  const Eigen::VectorXd m = a * q;
  st.value = lz + lambda.dot(targets);
  st.gradient = targets - m;
  const Eigen::MatrixXd centered = a.colwise() - m;
  st.hessian = centered * q.asDiagonal() * centered.transpose();
  return st;
}

}  // namespace detail

/// Solves the CME problem for target moments s2 by Newton's method on the
/// dual with Armijo backtracking, starting from lambda = 0.
///
/// Throws InfeasibleTarget when a target lies outside the open interval
/// (min_k G[d][k]^2, max_k G[d][k]^2), and ConvergenceFailure (carrying the
/// last multipliers) when the iteration budget runs out. A residual row
/// whose squares are constant is dropped with lambda_d = 0 and a warning
/// when its target equals that constant, and is infeasible otherwise.
inline CmeSolution solve_cme(const ResidualModel& model, std::span<const double> targets,
                             const CmeOptions& options = {}) {
  const std::size_t dims = model.dimension();
  if (targets.size() != dims)
    throw DimensionMismatch("solve_cme: target length differs from residual dimension D");
  const auto& a_full = model.squared();
  std::vector<std::string> warnings;
  std::vector<Eigen::Index> active;
  for (std::size_t d = 0; d < dims; ++d) {
    const double lo = a_full.row(d).minCoeff(), hi = a_full.row(d).maxCoeff();
    const double t = targets[d];
    if (!std::isfinite(t)) throw InvalidArgument("solve_cme: non-finite target");
    const double scale = std::max(1.0, std::abs(hi));
    if (hi - lo <= 1e-14 * scale) {
      if (std::abs(t - hi) <= 1e-12 * scale) {
        warnings.push_back("residual dimension " + std::to_string(d) +
                           " is constant; its constraint is vacuous and lambda is set to 0");
        continue;
      }
      std::ostringstream os;
      os << "solve_cme: residual dimension " << d << " has constant squared value " << hi
         << " but target " << t;
      throw InfeasibleTarget(os.str(), d, t, lo, hi);
    }
    if (!(t > lo && t < hi)) {
      std::ostringstream os;
      os.precision(17);
      os << "solve_cme: target " << t << " for residual dimension " << d
         << " is outside the attainable interval (" << lo << ", " << hi << ")";
      throw InfeasibleTarget(os.str(), d, t, lo, hi);
    }
    active.push_back(static_cast<Eigen::Index>(d));
  }

  CmeSolution sol{.lambda = std::vector<double>(dims, 0.0),
                  .q_hat = SimplexDistribution::uniform(model.size()),
                  .achieved_moments = {},
                  .target_moments = std::vector<double>(targets.begin(), targets.end()),
                  .warnings = std::move(warnings)};

  if (!active.empty()) {
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd a(na, a_full.cols());
    Eigen::VectorXd t(na);
    for (Eigen::Index i = 0; i < na; ++i) {
      a.row(i) = a_full.row(active[i]);
      t[i] = targets[active[i]];
    }

    auto st = detail::evaluate_dual(a, t, Eigen::VectorXd::Zero(na));
    int newton = 0, gradient_steps = 0;
    bool done = st.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance;
    while (!done) {
      if (newton >= options.max_newton_iterations || gradient_steps > options.max_gradient_steps)
        break;
      Eigen::VectorXd dir;
      bool newton_step = false;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(st.hessian);
      const double hscale = std::max(st.hessian.diagonal().maxCoeff(), 1e-8);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
          ldlt.vectorD().minCoeff() > 1e-13 * hscale) {
        dir = -ldlt.solve(st.gradient);
        newton_step = dir.allFinite();
      }
      if (!newton_step) {
        dir = -st.gradient / hscale;
        ++gradient_steps;
      }
      const double slope = st.gradient.dot(dir);
      double step = 1.0;
      bool accepted = false;
      detail::DualState trial;
      for (int bt = 0; bt < 60; ++bt) {
        trial = detail::evaluate_dual(a, t, st.lambda + step * dir);
        const bool armijo = trial.value <= st.value + options.armijo_slope * step * slope;
        // Near the optimum psi changes below round-off; accept any step
        // that still shrinks the gradient.
        const bool tiny = std::abs(step * slope) < 1e-14 * (1.0 + std::abs(st.value));
        const bool shrinks = trial.gradient.lpNorm<Eigen::Infinity>() <
                             st.gradient.lpNorm<Eigen::Infinity>();
        if (std::isfinite(trial.value) && (armijo || (tiny && shrinks))) {
          accepted = true;
          break;
        }
        step *= options.backtrack_shrink;
      }
      if (newton_step) ++newton;
      if (!accepted) break;
      st = std::move(trial);
      done = st.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance;
    }
    sol.iterations = newton + gradient_steps;
    for (Eigen::Index i = 0; i < na; ++i) sol.lambda[active[i]] = st.lambda[i];
    sol.gradient_norm = st.gradient.lpNorm<Eigen::Infinity>();
    if (!done) {
      std::ostringstream os;
      os << "solve_cme: dual gradient sup-norm " << sol.gradient_norm << " after "
         << sol.iterations << " iterations (tolerance " << options.gradient_tolerance << ")";
      throw ConvergenceFailure(os.str(), sol.lambda, sol.iterations);
    }
    sol.q_hat = SimplexDistribution::from_log_weights(st.log_q);
  }
  sol.converged = true;
  sol.achieved_moments = achieved_moments(sol.q_hat, model);
  sol.log_partition = log_partition(model, sol.lambda);
  sol.dual_value = sol.log_partition;
  for (std::size_t d = 0; d < dims; ++d) sol.dual_value += sol.lambda[d] * targets[d];
  if (active.empty()) sol.gradient_norm = 0.0;
  return sol;
}

inline CmeSolution solve_cme(const ResidualModel& model, std::initializer_list<double> targets,
                             const CmeOptions& options = {}) {
  return solve_cme(model, std::span<const double>(targets.begin(), targets.size()), options);
}

/// Known-tolerance path: lambda_d = 1/sigma_d^2, no solve. The achieved
/// moments play the role of the targets.
inline CmeSolution cme_from_tolerances(const ResidualModel& model, const ToleranceSpec& tol) {
  if (tol.dimension() != model.dimension())
    throw DimensionMismatch("cme_from_tolerances: sigma length differs from residual dimension D");
  const auto lambda = tol.multipliers();
  auto q = gibbs_from_multipliers(model, lambda);
  auto m = achieved_moments(q, model);
  const double lz = log_partition(model, lambda);
  double dual = lz;
  for (std::size_t d = 0; d < lambda.size(); ++d) dual += lambda[d] * m[d];
  return CmeSolution{.lambda = lambda,
                     .q_hat = std::move(q),
                     .achieved_moments = m,
                     .target_moments = m,
                     .log_partition = lz,
                     .dual_value = dual,
                     .converged = true,
                     .iterations = 0,
                     .gradient_norm = 0.0,
                     .warnings = {}};
}

}  // namespace meb
