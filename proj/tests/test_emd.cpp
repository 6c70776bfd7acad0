#include <gtest/gtest.h>

#include <cmath>

#include "oracles/transport_oracles.hpp"
#include "rbir/emd.hpp"
#include "support.hpp"

using namespace rbir;

namespace {

GroundDistance two_point(double d12) {
  Matrix d(2, 2);
  d(0, 1) = d(1, 0) = d12;
  return GroundDistance(d);
}

oracle::Costs costs_of(const Matrix& m) {
  oracle::Costs c(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) c[i][j] = m(i, j);
  return c;
}

Matrix rect_costs(testgen::Rng& r, std::size_t rows, std::size_t cols) {
  Matrix c(rows, cols);
  for (auto& v : c.values()) v = r.integer(0, 20);
  return c;
}

void expect_feasible(const TransportSolution& s, const std::vector<double>& x, const std::vector<double>& y) {
  const double wm = std::min(total_weight(x), total_weight(y));
  EXPECT_NEAR(s.shipped, wm, 1e-9 * std::max(1.0, wm));
  for (std::size_t i = 0; i < x.size(); ++i) {
    double row = 0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      EXPECT_GE(s.flow(i, j), -1e-9);
      row += s.flow(i, j);
    }
    EXPECT_LE(row, x[i] + 1e-9);
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    double col = 0;
    for (std::size_t i = 0; i < x.size(); ++i) col += s.flow(i, j);
    EXPECT_LE(col, y[j] + 1e-9);
  }
}

}  // namespace

TEST(BlockWeight, Examples) {
  EXPECT_EQ(block_weight(0, 10), 0.0);
  EXPECT_DOUBLE_EQ(block_weight(1u << 2, 10), 30.0);
  EXPECT_DOUBLE_EQ(block_weight((1u << 1) | (1u << 4), 10), 70.0);
  EXPECT_DOUBLE_EQ(block_weight((1u << 10) - 1, 10), 550.0);
}

TEST(WeightVector, Examples) {
  EXPECT_EQ(weight_vector(BinarySignature(3, 10)), (WeightVector{0, 0, 0}));
  BinarySignature s(3, 10);
  s.set(0, 10);
  EXPECT_EQ(weight_vector(s), (WeightVector{100, 0, 0}));
}

TEST(WeightVector, OrIsComponentwiseMonotone) {
  testgen::Rng r(11);
  for (int t = 0; t < 500; ++t) {
    const auto a = testgen::signature(r, 8, 10, 0.15), b = testgen::signature(r, 8, 10, 0.15);
    const auto wa = weight_vector(a), wb = weight_vector(b), wu = weight_vector(a | b);
    for (std::size_t k = 0; k < wu.size(); ++k) {
      EXPECT_GE(wu[k], wa[k]);
      EXPECT_GE(wu[k], wb[k]);
      EXPECT_LE(wu[k], 550.0);
    }
  }
}

TEST(GroundDistance, Examples) {
  const auto d = ground_distance(ColorPalette({{0, 0, 0}, {1, 1, 1}, {1, 0, 0}}));
  EXPECT_NEAR(d(0, 1), 1.7320508, 1e-7);
  EXPECT_DOUBLE_EQ(d(0, 2), 1.0);
  const auto full = ground_distance(default_palette());
  for (std::size_t i = 0; i < full.size(); ++i) {
    EXPECT_EQ(full(i, i), 0.0);
    for (std::size_t j = 0; j < full.size(); ++j) {
      EXPECT_EQ(full(i, j), full(j, i));
      EXPECT_LE(full(i, j), std::sqrt(3.0) + 1e-15);
      for (std::size_t k = 0; k < full.size(); ++k) EXPECT_LE(full(i, k), full(i, j) + full(j, k) + 1e-12);
    }
  }
}

TEST(GroundDistance, RejectsInvalidMatrices) {
  Matrix asym(2, 2);
  asym(0, 1) = 1;
  EXPECT_THROW(GroundDistance{asym}, Error);
  Matrix diag(2, 2);
  diag(0, 0) = 1;
  EXPECT_THROW(GroundDistance{diag}, Error);
  EXPECT_THROW(GroundDistance{Matrix(2, 3)}, Error);
}

TEST(Transport, Examples) {
  const std::vector<double> x{10, 0}, y{0, 10};
  const auto s = solve_transportation(x, y, two_point(5));
  EXPECT_DOUBLE_EQ(s.flow(0, 1), 10);
  EXPECT_DOUBLE_EQ(s.cost, 50);

  const std::vector<double> a{6, 4}, b{5, 5};
  const auto t = solve_transportation(a, b, two_point(1));
  EXPECT_NEAR(t.cost, 1.0, 1e-12);
  EXPECT_NEAR(t.flow(0, 0), 5, 1e-12);
  EXPECT_NEAR(t.flow(1, 1), 4, 1e-12);
  EXPECT_NEAR(t.flow(0, 1), 1, 1e-12);

  const std::vector<double> same{3, 7};
  const auto u = solve_transportation(same, same, two_point(2));
  EXPECT_EQ(u.cost, 0.0);
  EXPECT_EQ(u.flow(0, 0), 3.0);
  EXPECT_EQ(u.flow(1, 1), 7.0);

  const std::vector<double> zero{0, 0};
  const auto z = solve_transportation(zero, zero, two_point(1));
  EXPECT_EQ(z.cost, 0.0);
  EXPECT_EQ(z.shipped, 0.0);
}

TEST(Transport, InputValidation) {
  const std::vector<double> ok{1, 1}, neg{1, -1}, inf{1, INFINITY}, three{1, 1, 1};
  EXPECT_THROW(solve_transportation(neg, ok, two_point(1)), Error);
  EXPECT_THROW(solve_transportation(ok, inf, two_point(1)), Error);
  EXPECT_THROW(solve_transportation(three, ok, two_point(1)), Error);
}

TEST(Transport, MatchesBruteForceOnSmallInstances) {
  testgen::Rng r(12);
  for (int t = 0; t < 500; ++t) {
    const std::size_t rows = r.integer(1, 4), cols = r.integer(1, 4);
    const auto x = testgen::integer_weights(r, rows, 10), y = testgen::integer_weights(r, cols, 10);
    const Matrix c = rect_costs(r, rows, cols);
    const auto s = solve_transportation(x, y, c);
    EXPECT_NEAR(s.cost, oracle::brute_force_cost(x, y, costs_of(c)), 1e-6) << "trial " << t;
    expect_feasible(s, x, y);
  }
}

TEST(Transport, MatchesMinCostFlowOnMidSizeInstances) {
  testgen::Rng r(13);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = r.integer(2, 16);
    const auto x = testgen::integer_weights(r, n, 1000, 0.3), y = testgen::integer_weights(r, n, 1000, 0.3);
    const Matrix c = testgen::cost_matrix(r, n, true);
    const auto s = solve_transportation(x, y, c);
    EXPECT_NEAR(s.cost, oracle::min_cost_flow_cost(x, y, costs_of(c)), 1e-6) << "trial " << t;
    expect_feasible(s, x, y);
  }
}

TEST(Transport, FeasibleOnPaletteSizedRealInstances) {
  testgen::Rng r(14);
  const auto d = ground_distance(default_palette());
  for (int t = 0; t < 100; ++t) {
    const auto x = testgen::real_weights(r, 32, 0.6), y = testgen::real_weights(r, 32, 0.6);
    if (total_weight(x) == 0 || total_weight(y) == 0) continue;
    const auto s = solve_transportation(x, y, d);
    expect_feasible(s, x, y);
    EXPECT_NEAR(s.cost, oracle::min_cost_flow_cost(x, y, costs_of(d.matrix())), 1e-6);
  }
}

TEST(Emd, Examples) {
  const WeightVector a{10, 0}, b{0, 10};
  EXPECT_DOUBLE_EQ(emd(a, b, two_point(5)), 5.0);
  const WeightVector c{6, 4}, e{5, 5};
  EXPECT_NEAR(emd(c, e, two_point(1)), 0.1, 1e-12);
  EXPECT_EQ(emd(c, c, two_point(1)), 0.0);
  const WeightVector zero{0, 0};
  EXPECT_EQ(emd(zero, zero, two_point(1)), 0.0);
  EXPECT_TRUE(std::isinf(emd(zero, a, two_point(1))));
  EXPECT_TRUE(std::isinf(emd(a, zero, two_point(1))));
  EXPECT_DOUBLE_EQ(max_total_weight(c, WeightVector{1, 1}), 10.0);
  EXPECT_THROW(emd(WeightVector{1, 2, 3}, a, two_point(1)), Error);
}

TEST(EmdProperties, NonNegativeAndSymmetric) {
  testgen::Rng r(15);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = r.integer(1, 12);
    const auto d = testgen::metric_distance(r, n);
    const auto a = testgen::real_weights(r, n), b = testgen::real_weights(r, n);
    const double ab = emd(a, b, d), ba = emd(b, a, d);
    EXPECT_GE(ab, 0.0);
    if (std::isinf(ab)) {
      EXPECT_TRUE(std::isinf(ba));
    } else {
      EXPECT_NEAR(ab, ba, 1e-9);
    }
  }
}

TEST(EmdProperties, ScaleCovariant) {
  testgen::Rng r(16);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = r.integer(1, 12);
    const auto d = testgen::metric_distance(r, n);
    auto a = testgen::real_weights(r, n), b = testgen::real_weights(r, n);
    if (total_weight(a) == 0 || total_weight(b) == 0) continue;
    const double alpha = std::exp(r.uniform(-3, 3));
    const double base = emd(a, b, d);
    for (auto& v : a) v *= alpha;
    for (auto& v : b) v *= alpha;
    EXPECT_NEAR(emd(a, b, d), base, 1e-9 * std::max(1.0, base));
  }
}

TEST(EmdProperties, TriangleInequalityAtEqualMass) {
  testgen::Rng r(17);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = r.integer(1, 10);
    const auto d = testgen::metric_distance(r, n);
    const double mass = r.uniform(1, 500);
    auto draw = [&] {
      auto w = testgen::real_weights(r, n);
      if (total_weight(w) == 0) w[0] = 1;
      return testgen::with_total(w, mass);
    };
    const auto a = draw(), b = draw(), c = draw();
    EXPECT_LE(emd(a, c, d), emd(a, b, d) + emd(b, c, d) + 1e-9);
  }
}

TEST(EmdProperties, IdentityOfIndiscernibles) {
  testgen::Rng r(18);
  const auto d = ground_distance(default_palette());
  for (int t = 0; t < 200; ++t) {
    const auto s = testgen::signature(r, 32, 10, 0.05);
    const auto w = weight_vector(s);
    EXPECT_EQ(emd(w, w, d), 0.0);
  }
}
