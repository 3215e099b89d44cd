#include <cmath>

#include <gtest/gtest.h>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/numerics.hpp"
#include "poolbreaker/random.hpp"

using namespace poolbreaker;

namespace {

Matrix random_adjacency(Rng& rng, std::size_t n, double p) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) a(i, j) = a(j, i) = 1.0;
  return a;
}

}  // namespace

TEST(Normalize, SingleNodeIsIdentity) {
  const auto n = normalize_adjacency(Matrix(1, 1));
  EXPECT_DOUBLE_EQ(n.normalized(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(n.inv_sqrt_degree[0], 1.0);
}

TEST(Normalize, SingleEdgeIsAllHalves) {
  const auto n = normalize_adjacency(Matrix{{0, 1}, {1, 0}});
  for (double v : n.normalized.values()) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Normalize, PathEntryByHand) {
  const auto n = normalize_adjacency(Matrix{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}});
  EXPECT_NEAR(n.normalized(0, 1), 1.0 / (std::sqrt(2.0) * std::sqrt(3.0)), 1e-15);
  EXPECT_NEAR(n.normalized(0, 1), 0.40825, 1e-5);
}

TEST(Normalize, MatchesTripleLoopOnRandomGraphs) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const Matrix a = random_adjacency(rng, n, 0.4);
    const auto got = normalize_adjacency(a);
    // Independent evaluation: D^-1/2 (A + I) D^-1/2 as explicit diagonal products.
    Matrix at = a;
    for (std::size_t i = 0; i < n; ++i) at(i, i) = 1.0;
    Matrix dinv(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double deg = 0.0;
      for (std::size_t j = 0; j < n; ++j) deg += at(i, j);
      dinv(i, i) = 1.0 / std::sqrt(deg);
    }
    Matrix expect(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t l = 0; l < n; ++l) expect(i, j) += dinv(i, k) * at(k, l) * dinv(l, j);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_DOUBLE_EQ(got.base(i, i), 1.0);
      EXPECT_GT(got.inv_sqrt_degree[i], 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_NEAR(got.normalized(i, j), expect(i, j), 1e-14);
        EXPECT_EQ(got.normalized(i, j), got.normalized(j, i));
      }
    }
    EXPECT_EQ(normalize_adjacency(a).normalized, got.normalized);
  }
}

TEST(Normalize, RejectsInvalidAdjacency) {
  EXPECT_THROW(normalize_adjacency(Matrix(2, 3)), StructuralError);
  EXPECT_THROW(normalize_adjacency(Matrix{{0, 1}, {0, 0}}), StructuralError);
  EXPECT_THROW(normalize_adjacency(Matrix{{1, 0}, {0, 0}}), StructuralError);
  EXPECT_THROW(normalize_adjacency(Matrix{{0, 2}, {2, 0}}), StructuralError);
}

TEST(Softmax, SymmetricLogits) {
  const auto r = stable_softmax_nll({0.0, 0.0}, 0);
  EXPECT_NEAR(r.probabilities[0], 0.5, 1e-15);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const auto r = stable_softmax_nll({1000.0, 1000.0}, 1);
  EXPECT_NEAR(r.probabilities[1], 0.5, 1e-15);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
  const auto far = stable_softmax_nll({1e6, -1e6, 0.0}, 1);
  EXPECT_TRUE(std::isfinite(far.loss));
  EXPECT_NEAR(far.loss, 2e6, 1e-6);
}

TEST(Softmax, KnownLoss) {
  // -log(e^2 / (e^2 + 1)) = log(1 + e^-2)
  EXPECT_NEAR(stable_softmax_nll({2.0, 0.0}, 0).loss, std::log1p(std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(stable_softmax_nll({2.0, 0.0}, 0).loss, 0.12693, 1e-5);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    Vector z(1 + rng.below(6));
    for (double& v : z) v = rng.uniform(-50, 50);
    const double shift = rng.uniform(-1e3, 1e3);
    Vector zs = z;
    for (double& v : zs) v += shift;
    const auto a = stable_softmax_nll(z, 0);
    const auto b = stable_softmax_nll(zs, 0);
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      sum += a.probabilities[i];
      EXPECT_NEAR(a.probabilities[i], b.probabilities[i], 1e-12);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(a.loss, b.loss, 1e-9);
  }
}

TEST(Softmax, Errors) {
  EXPECT_THROW(stable_softmax_nll({}, 0), StructuralError);
  EXPECT_THROW(stable_softmax_nll({1.0}, 1), StructuralError);
  EXPECT_THROW(stable_softmax_nll({NAN, 1.0}, 0), NumericError);
}

TEST(FiniteDifference, IdentityAndSquare) {
  const Matrix at{{3.0}};
  EXPECT_NEAR(finite_difference_gradient([](const Matrix& m) { return m(0, 0); }, at, 0, 0, 1e-5), 1.0, 1e-9);
  EXPECT_NEAR(finite_difference_gradient([](const Matrix& m) { return m(0, 0) * m(0, 0); }, at, 0, 0, 1e-5), 6.0,
              1e-6);
}

TEST(FiniteDifference, ErrorDecaysQuadratically) {
  const Matrix at{{0.7}};
  auto cube = [](const Matrix& m) { return std::pow(m(0, 0), 3); };
  const double exact = 3 * 0.7 * 0.7;
  const double e1 = std::abs(finite_difference_gradient(cube, at, 0, 0, 1e-2) - exact);
  const double e2 = std::abs(finite_difference_gradient(cube, at, 0, 0, 1e-3) - exact);
  // Central difference error of x^3 is exactly step^2.
  EXPECT_NEAR(e1, 1e-4, 1e-9);
  EXPECT_NEAR(e1 / e2, 100.0, 1e-2);
}

TEST(FiniteDifference, PropagatesNonFinite) {
  const Matrix at{{0.0}};
  EXPECT_THROW(finite_difference_gradient([](const Matrix& m) { return 1.0 / m(0, 0) * 0.0 + NAN; }, at, 0, 0, 1e-5),
               NumericError);
  EXPECT_THROW(finite_difference_gradient([](const Matrix& m) { return m(0, 0); }, at, 0, 0, 0.0), StructuralError);
}

TEST(MatrixOps, ProductsAndTransposes) {
  const Matrix a{{1, 2}, {3, 4}, {5, 6}};
  const Matrix b{{1, 0, 2}, {0, 1, 3}};
  const Matrix ab = matmul(a, b);
  EXPECT_EQ(ab, (Matrix{{1, 2, 8}, {3, 4, 18}, {5, 6, 28}}));
  EXPECT_EQ(matmul_tn(a, a), matmul(transpose(a), a));
  EXPECT_EQ(matmul_nt(a, a), matmul(a, transpose(a)));
  EXPECT_THROW(matmul(a, a), StructuralError);
  EXPECT_EQ(submatrix(Matrix{{0, 1, 2}, {3, 4, 5}, {6, 7, 8}}, std::vector<std::size_t>{2, 0}),
            (Matrix{{8, 6}, {2, 0}}));
}
