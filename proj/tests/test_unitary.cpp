#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "unirobust/error.hpp"
#include "unirobust/unitary.hpp"

using namespace unirobust;
using testing_support::random_tensor;

namespace {

// Modified Gram-Schmidt on the columns; R gets a positive diagonal by construction.
std::vector<std::vector<double>> gram_schmidt_q(const Tensor& w) {
  const std::size_t n = w.rows();
  std::vector<std::vector<double>> cols(n, std::vector<double>(n));
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t r = 0; r < n; ++r) cols[c][r] = w.at(r, c);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += cols[p][r] * cols[c][r];
      for (std::size_t r = 0; r < n; ++r) cols[c][r] -= dot * cols[p][r];
    }
    double norm = 0.0;
    for (double v : cols[c]) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : cols[c]) v /= norm;
  }
  std::vector<std::vector<double>> q(n, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) q[r][c] = cols[c][r];
  return q;
}

Tensor product(const Tensor& a, const Tensor& b) { return matmul(a, b); }

}  // namespace

TEST(QR, ReconstructsAndIsTriangular) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {1, 2, 5, 8}) {
    const auto w = random_tensor({n, n}, rng);
    const auto [q, r] = qr_decompose(w);
    EXPECT_LT(unitarity_residual(q), 1e-12);
    const auto qr = product(q, r);
    for (std::size_t i = 0; i < n * n; ++i) EXPECT_NEAR(qr[i], w[i], 1e-12);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(r.at(i, j), 0.0);
  }
}

TEST(QR, RankDeficientColumn) {
  const auto [q, r] = qr_decompose(Tensor::matrix({{3, 0}, {4, 0}}));
  EXPECT_NEAR(std::abs(r.at(0, 0)), 5.0, 1e-12);
  EXPECT_NEAR(r.at(1, 1), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(q.at(0, 0)), 0.6, 1e-12);
  EXPECT_NEAR(std::abs(q.at(1, 0)), 0.8, 1e-12);
  EXPECT_LT(unitarity_residual(q), 1e-12);
}

TEST(QR, NonSquareIsDimensionError) {
  try {
    qr_decompose(Tensor::zeros({2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension);
  }
}

TEST(SignCorrect, Examples) {
  EXPECT_EQ(sign_correct(Tensor::matrix({{2, 1}, {0, -3}})).diag, (std::vector<int>{1, -1}));
  EXPECT_EQ(sign_correct(Tensor::matrix({{0, 1}, {0, 0}})).diag, (std::vector<int>{1, 1}));
  EXPECT_EQ(sign_correct(Tensor::matrix({{-0.0, 0}, {0, -1e-300}})).diag, (std::vector<int>{1, -1}));
}

TEST(Projection, DiagonalGoesToSigns) {
  const auto u = project_unitary(Tensor::matrix({{2, 0}, {0, -3}}));
  EXPECT_NEAR(u.at(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(u.at(1, 1), -1.0, 1e-15);
  EXPECT_NEAR(u.at(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(u.at(1, 0), 0.0, 1e-15);
}

TEST(Projection, ScaledRotation) {
  const auto u = project_unitary(Tensor::matrix({{0, -2}, {3, 0}}));
  const std::vector<double> want{0, -1, 1, 0};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(u[i], want[i], 1e-15);
}

TEST(Projection, RotationIsFixedPoint) {
  const double t = 0.7;
  const auto rot = Tensor::matrix({{std::cos(t), -std::sin(t)}, {std::sin(t), std::cos(t)}});
  const auto u = project_unitary(rot);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(u[i], rot[i], 1e-12);
}

TEST(Projection, IdempotentAndOrthogonal) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = project_unitary(random_tensor({6, 6}, rng));
    EXPECT_LT(unitarity_residual(u), 1e-12);
    const auto uu = project_unitary(u);
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(uu[i], u[i], 1e-12);
    EXPECT_NEAR(std::abs(determinant(u)), 1.0, 1e-12);
  }
}

TEST(Projection, SingularInputStillOrthogonal) {
  const auto u = project_unitary(Tensor::zeros({4, 4}));
  EXPECT_LT(unitarity_residual(u), 1e-12);
  const auto v = project_unitary(Tensor::matrix({{3, 0}, {4, 0}}));
  EXPECT_LT(unitarity_residual(v), 1e-12);
}

TEST(Projection, MatchesGramSchmidtOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = random_tensor({8, 8}, rng);
    const auto u = project_unitary(w);
    const auto q = gram_schmidt_q(w);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(u.at(r, c), q[r][c], 1e-8);
  }
}

TEST(Determinant, Examples) {
  EXPECT_NEAR(determinant(Tensor::matrix({{2, 0}, {0, -3}})), -6.0, 1e-12);
  EXPECT_NEAR(determinant(Tensor::matrix({{1, 2}, {3, 4}})), -2.0, 1e-12);
  EXPECT_NEAR(determinant(Tensor::matrix({{3, 0}, {4, 0}})), 0.0, 1e-12);
}

TEST(NormPreservation, RandomOrthogonalMatrices) {
  std::mt19937_64 rng(13);
  for (std::size_t n : {4, 16, 64}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto u = project_unitary(random_tensor({n, n}, rng));
      const auto x = random_tensor({n}, rng);
      const auto xp = random_tensor({n}, rng);
      double dist = 0.0;
      for (std::size_t i = 0; i < n; ++i) dist += (x[i] - xp[i]) * (x[i] - xp[i]);
      EXPECT_LT(check_norm_preservation(u, x, xp), 1e-9 * std::sqrt(dist));
    }
  }
}

TEST(NormPreservation, NonOrthogonalIsContractError) {
  const auto w = Tensor::matrix({{2, 0}, {0, 1}});
  try {
    check_norm_preservation(w, Tensor::vector({1, 0}), Tensor::vector({0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract);
  }
}

TEST(NormPreservation, LengthMismatch) {
  const auto u = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_THROW(check_norm_preservation(u, Tensor::vector({1, 0, 0}), Tensor::vector({0, 0})), Error);
}
