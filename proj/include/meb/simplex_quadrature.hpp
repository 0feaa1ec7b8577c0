#pragma once

// Midpoint quadrature over the probability simplex Q_K.
//
// The simplex {q >= 0, sum q = 1} is measured by Lebesgue measure on its
// first K-1 coordinates, so its volume is 1/(K-1)!. Under the cumulative
// map y_i = q_1 + ... + q_i it becomes the ordered region
// 0 <= y_1 <= ... <= y_{K-1} <= 1 with unit Jacobian. The Freudenthal
// triangulation of a cube lattice of spacing 1/M is compatible with the
// hyperplanes y_i = y_j, so the ordered region is an exact union of M^{K-1}
// congruent sub-simplices of volume 1/(M^{K-1} (K-1)!). Each node below is
// the centroid of one sub-simplex. For K = 3 this is the regular
// subdivision of the triangle into M^2 triangles; for K = 2 it is the plain
// midpoint rule.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "meb/error.hpp"

namespace meb {

inline constexpr std::size_t kMaxQuadratureStates = 4;

inline double simplex_volume(std::size_t k) {
  double f = 1.0;
  for (std::size_t i = 2; i < k; ++i) f *= static_cast<double>(i);
  return 1.0 / f;
}

inline std::size_t simplex_node_count(std::size_t k, std::size_t resolution) {
  std::size_t n = 1;
  for (std::size_t i = 1; i < k; ++i) n *= resolution;
  return n;
}

/// Calls f(q, weight) for every lattice node; weights sum to
/// simplex_volume(k). Requires 1 <= k <= 4 and resolution >= 1.
template <class F>
void for_each_simplex_node(std::size_t k, std::size_t resolution, F&& f) {
  if (k < 1 || k > kMaxQuadratureStates)
    throw UnsupportedDimension("simplex quadrature supports 1 <= K <= 4, got K = " +
                               std::to_string(k));
  if (resolution < 1) throw InvalidArgument("simplex quadrature: resolution must be >= 1");
  const std::size_t n = k - 1;
  std::array<double, kMaxQuadratureStates> q{};
  if (n == 0) {
    q[0] = 1.0;
    f(std::span<const double>(q.data(), 1), 1.0);
    return;
  }
  const double m = static_cast<double>(resolution);
  double factorial = 1.0;
  for (std::size_t i = 2; i <= n; ++i) factorial *= static_cast<double>(i);
  const double weight = 1.0 / (std::pow(m, static_cast<double>(n)) * factorial);

  // Centroid offset of the coordinate ranked j-th largest in a Freudenthal
  // simplex: it is nonzero at n - j of the n + 1 vertices.
  std::array<double, kMaxQuadratureStates> rank_offset{};
  for (std::size_t j = 0; j < n; ++j)
    rank_offset[j] = static_cast<double>(n - j) / static_cast<double>(n + 1);

  std::array<std::size_t, kMaxQuadratureStates> a{};  // nondecreasing cell index
  std::array<double, kMaxQuadratureStates> x{};
  std::array<double, kMaxQuadratureStates> y{};
  std::array<std::size_t, kMaxQuadratureStates> perm{};
  while (true) {
    std::iota(perm.begin(), perm.begin() + n, std::size_t{0});
    do {
      for (std::size_t j = 0; j < n; ++j) x[perm[j]] = rank_offset[j];
      bool valid = true;
      for (std::size_t i = 0; i + 1 < n && valid; ++i)
        if (a[i] == a[i + 1] && x[i] > x[i + 1]) valid = false;
      if (!valid) continue;
      for (std::size_t i = 0; i < n; ++i) y[i] = (static_cast<double>(a[i]) + x[i]) / m;
      q[0] = y[0];
      for (std::size_t i = 1; i < n; ++i) q[i] = y[i] - y[i - 1];
      q[n] = 1.0 - y[n - 1];
      f(std::span<const double>(q.data(), k), weight);
    } while (std::next_permutation(perm.begin(), perm.begin() + n));

    // Next nondecreasing sequence in [0, resolution).
    std::size_t i = n;
    while (i > 0 && a[i - 1] == resolution - 1) --i;
    if (i == 0) break;
    ++a[i - 1];
    for (std::size_t j = i; j < n; ++j) a[j] = a[i - 1];
  }
}

}  // namespace meb
