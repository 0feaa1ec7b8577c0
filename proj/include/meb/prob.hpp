#pragma once

// Finite-state probability primitives: the coarse-grained state grid,
// distributions on the unit simplex, observed counts, and the entropy and
// divergence functionals built on them. All logarithms are natural.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "meb/error.hpp"
#include "meb/numeric.hpp"

namespace meb {

/// Ordered set of K cells, each with an R-dimensional representative value
/// and a per-coordinate width. Every K-vector in the library indexes
/// against this ordering.
class StateGrid {
 public:
  StateGrid(std::size_t dim, std::vector<double> values,
            std::vector<double> widths)
      : dim_(dim), values_(std::move(values)), widths_(std::move(widths)) {
    if (dim_ == 0) throw InvalidArgument("StateGrid: dimension must be >= 1");
    if (values_.empty() || values_.size() % dim_ != 0)
      throw InvalidArgument("StateGrid: value count is not a positive multiple of the dimension");
    if (widths_.size() != values_.size())
      throw InvalidArgument("StateGrid: widths and values differ in length");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidArgument("StateGrid: non-finite cell value");
    for (double w : widths_)
      if (!(w > 0.0) || !std::isfinite(w))
        throw InvalidArgument("StateGrid: cell widths must be finite and > 0");
  }

  /// n points from lo to hi inclusive; widths equal the spacing.
  static StateGrid linspace(double lo, double hi, std::size_t n) {
    if (n < 2 || !(hi > lo)) throw InvalidArgument("StateGrid::linspace: need n >= 2 and hi > lo");
    const double h = (hi - lo) / static_cast<double>(n - 1);
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = lo + static_cast<double>(k) * h;
    v.back() = hi;
    return StateGrid(1, std::move(v), std::vector<double>(n, h));
  }

  /// n equal-width cells partitioning [lo, hi]; representatives are midpoints.
  static StateGrid cells(double lo, double hi, std::size_t n) {
    if (n < 1 || !(hi > lo)) throw InvalidArgument("StateGrid::cells: need n >= 1 and hi > lo");
    const double w = (hi - lo) / static_cast<double>(n);
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k)
      v[k] = lo + (static_cast<double>(k) + 0.5) * w;
    return StateGrid(1, std::move(v), std::vector<double>(n, w));
  }

  /// One-dimensional grid at explicit points with a common width.
  static StateGrid points(std::vector<double> xs, double width = 1.0) {
    const std::size_t n = xs.size();
    return StateGrid(1, std::move(xs), std::vector<double>(n, width));
  }

  std::size_t size() const noexcept { return values_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> value(std::size_t k) const {
    return {values_.data() + k * dim_, dim_};
  }
  std::span<const double> width(std::size_t k) const {
    return {widths_.data() + k * dim_, dim_};
  }
  /// First coordinate of cell k; the usual accessor for 1-D grids.
  double x(std::size_t k) const { return values_[k * dim_]; }
  double volume(std::size_t k) const {
    double v = 1.0;
    for (double w : width(k)) v *= w;
    return v;
  }

  const std::vector<double>& raw_values() const noexcept { return values_; }
  const std::vector<double>& raw_widths() const noexcept { return widths_; }

  /// Cell k of the result is cell perm[k] of this grid.
  StateGrid permuted(std::span<const std::size_t> perm) const {
    if (perm.size() != size()) throw DimensionMismatch("StateGrid::permuted: permutation length");
    std::vector<double> v, w;
    v.reserve(values_.size());
    w.reserve(widths_.size());
    for (std::size_t k : perm) {
      auto a = value(k), b = width(k);
      v.insert(v.end(), a.begin(), a.end());
      w.insert(w.end(), b.begin(), b.end());
    }
    return StateGrid(dim_, std::move(v), std::move(w));
  }

  bool operator==(const StateGrid&) const = default;

 private:
  std::size_t dim_;
  std::vector<double> values_;
  std::vector<double> widths_;
};

/// A normalized K-vector of nonnegative weights (a point of the simplex).
///
/// Construction renormalizes inputs whose sum is within 1e-9 of one and
/// rejects anything further off, or any negative or non-finite weight.
class SimplexDistribution {
 public:
  static constexpr double kRenormalizeTolerance = 1e-9;

  explicit SimplexDistribution(std::vector<double> weights)
      : w_(std::move(weights)) {
    if (w_.empty()) throw InvalidArgument("SimplexDistribution: empty weight vector");
    CompensatedSum s;
    for (double v : w_) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw InvalidArgument("SimplexDistribution: weights must be finite and >= 0");
      s.add(v);
    }
    const double total = s.value();
    if (std::abs(total - 1.0) > kRenormalizeTolerance)
      throw InvalidArgument("SimplexDistribution: weights sum to " +
                            std::to_string(total) + ", not 1");
    if (total != 1.0)
      for (double& v : w_) v /= total;
  }

  static SimplexDistribution uniform(std::size_t k) {
    if (k == 0) throw InvalidArgument("SimplexDistribution::uniform: K must be >= 1");
    return SimplexDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k)));
  }

  /// Normalizes exp(log_weights) with max-subtraction; inputs may be
  /// unnormalized and may contain -inf.
  static SimplexDistribution from_log_weights(std::span<const double> log_weights) {
    const double lz = log_sum_exp(log_weights);
    if (!std::isfinite(lz))
      throw InvalidArgument("SimplexDistribution::from_log_weights: no finite weight");
    std::vector<double> w(log_weights.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(log_weights[k] - lz);
    CompensatedSum s;
    for (double v : w) s.add(v);
    const double total = s.value();
    for (double& v : w) v /= total;
    return SimplexDistribution(std::move(w));
  }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t k) const { return w_[k]; }
  std::span<const double> weights() const noexcept { return w_; }

  SimplexDistribution permuted(std::span<const std::size_t> perm) const {
    if (perm.size() != size()) throw DimensionMismatch("SimplexDistribution::permuted: permutation length");
    std::vector<double> w;
    w.reserve(size());
    for (std::size_t k : perm) w.push_back(w_[k]);
    return SimplexDistribution(std::move(w));
  }

  bool operator==(const SimplexDistribution&) const = default;

 private:
  std::vector<double> w_;
};

/// The macrostate n = (n_1, ..., n_K) of N exchangeable observations.
class ObservedCounts {
 public:
  explicit ObservedCounts(std::vector<std::uint64_t> counts)
      : n_(std::move(counts)) {
    if (n_.empty()) throw InvalidArgument("ObservedCounts: empty count vector");
    total_ = std::accumulate(n_.begin(), n_.end(), std::uint64_t{0});
  }

  static ObservedCounts zeros(std::size_t k) {
    return ObservedCounts(std::vector<std::uint64_t>(k, 0));
  }

  std::size_t size() const noexcept { return n_.size(); }
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t operator[](std::size_t k) const { return n_[k]; }
  std::span<const std::uint64_t> counts() const noexcept { return n_; }

  /// p_k = n_k / N. Requires N >= 1.
  SimplexDistribution to_data_distribution() const {
    if (total_ == 0) throw InvalidArgument("ObservedCounts: data distribution needs N >= 1");
    std::vector<double> p(n_.size());
    const double inv = 1.0 / static_cast<double>(total_);
    for (std::size_t k = 0; k < n_.size(); ++k) p[k] = static_cast<double>(n_[k]) * inv;
    return SimplexDistribution(std::move(p));
  }

  ObservedCounts scaled(std::uint64_t m) const {
    std::vector<std::uint64_t> n(n_);
    for (auto& v : n) v *= m;
    return ObservedCounts(std::move(n));
  }

  ObservedCounts permuted(std::span<const std::size_t> perm) const {
    if (perm.size() != size()) throw DimensionMismatch("ObservedCounts::permuted: permutation length");
    std::vector<std::uint64_t> n;
    n.reserve(size());
    for (std::size_t k : perm) n.push_back(n_[k]);
    return ObservedCounts(std::move(n));
  }

  bool operator==(const ObservedCounts&) const = default;

 private:
  std::vector<std::uint64_t> n_;
  std::uint64_t total_ = 0;
};

/// H[q] = -sum q log q in nats, with 0 log 0 = 0.
inline double shannon_entropy(const SimplexDistribution& q) {
  CompensatedSum s;
  for (double v : q.weights()) s.add(-xlogx(v));
  return s.value();
}

/// H[p || q] = sum p log(p/q). Returns +inf when p puts mass where q has none.
inline double relative_entropy(const SimplexDistribution& p,
                               const SimplexDistribution& q) {
  if (p.size() != q.size())
    throw DimensionMismatch("relative_entropy: distributions live on grids of different size");
  CompensatedSum s;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    if (q[k] == 0.0) return kInf;
    s.add(p[k] * (std::log(p[k]) - std::log(q[k])));
  }
  return std::max(0.0, s.value());
}

/// sum_k n_k log q_k, the multinomial log-likelihood without the
/// multinomial coefficient. It equals -N H[p||q] + N sum p log p, i.e. it
/// differs from -N H[p||q] by a constant that depends on the data only.
/// Returns -inf when some n_k > 0 falls on q_k = 0.
inline double multinomial_log_likelihood(const ObservedCounts& counts,
                                         const SimplexDistribution& q) {
  if (counts.size() != q.size())
    throw DimensionMismatch("multinomial_log_likelihood: counts and q differ in size");
  CompensatedSum s;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (counts[k] == 0) continue;
    if (q[k] == 0.0) return -kInf;
    s.add(static_cast<double>(counts[k]) * std::log(q[k]));
  }
  return s.value();
}

/// log of the entropy-favoring prior density e^{H[q]}, taken against the
/// flat measure on the simplex.
inline double entropy_log_prior(const SimplexDistribution& q) {
  return shannon_entropy(q);
}

/// -N H[p || q] from log q directly, so that cells with q underflowing to
/// zero in linear space still contribute finite terms. Zero when N = 0.
inline double neg_scaled_divergence(const ObservedCounts& counts,
                                    std::span<const double> log_q) {
  if (counts.size() != log_q.size())
    throw DimensionMismatch("neg_scaled_divergence: counts and q differ in size");
  if (counts.total() == 0) return 0.0;
  const double log_n = std::log(static_cast<double>(counts.total()));
  CompensatedSum s;
  for (std::size_t k = 0; k < log_q.size(); ++k) {
    if (counts[k] == 0) continue;
    if (log_q[k] == -kInf) return -kInf;
    const double nk = static_cast<double>(counts[k]);
    s.add(nk * (log_q[k] - (std::log(nk) - log_n)));
  }
  return std::min(0.0, s.value());
}

}  // namespace meb
