#include <gtest/gtest.h>

#include <cmath>

#include "meb/simplex_quadrature.hpp"

using namespace meb;

TEST(SimplexQuadrature, NodeCountAndWeightsSumToVolume) {
  for (std::size_t k = 1; k <= 4; ++k)
    for (std::size_t m : {1u, 3u, 7u}) {
      std::size_t nodes = 0;
      double w = 0.0;
      for_each_simplex_node(k, m, [&](std::span<const double> q, double wt) {
        ++nodes;
        w += wt;
        double s = 0.0;
        for (double v : q) {
          EXPECT_GT(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-14);
      });
      EXPECT_EQ(nodes, simplex_node_count(k, m));
      EXPECT_NEAR(w, simplex_volume(k), 1e-13);
    }
}

TEST(SimplexQuadrature, IntegratesLinearFunctionsExactly) {
  // Centroid rule: exact for affine integrands on every sub-simplex.
  // The integral of q_i over the simplex is volume / K.
  for (std::size_t k = 2; k <= 4; ++k) {
    std::vector<double> acc(k, 0.0);
    for_each_simplex_node(k, 9, [&](std::span<const double> q, double w) {
      for (std::size_t i = 0; i < k; ++i) acc[i] += w * q[i];
    });
    for (std::size_t i = 0; i < k; ++i)
      EXPECT_NEAR(acc[i], simplex_volume(k) / static_cast<double>(k), 1e-14);
  }
}

TEST(SimplexQuadrature, QuadraticMomentsConverge) {
  // Dirichlet(1,...,1) moments: E[q_i q_j] = 1 / (K (K + 1)) for i != j.
  for (std::size_t k = 3; k <= 4; ++k) {
    double acc = 0.0;
    for_each_simplex_node(k, 40, [&](std::span<const double> q, double w) { acc += w * q[0] * q[1]; });
    const double exact = simplex_volume(k) / (static_cast<double>(k) * (k + 1.0));
    EXPECT_NEAR(acc / exact, 1.0, 1e-3);
  }
}

TEST(SimplexQuadrature, RejectsLargeK) {
  EXPECT_THROW(for_each_simplex_node(5, 3, [](std::span<const double>, double) {}), UnsupportedDimension);
  EXPECT_THROW(for_each_simplex_node(3, 0, [](std::span<const double>, double) {}), InvalidArgument);
}
