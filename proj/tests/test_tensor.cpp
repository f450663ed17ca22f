#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "unirobust/error.hpp"
#include "unirobust/tensor.hpp"

using namespace unirobust;
using testing_support::numeric_gradient;
using testing_support::random_tensor;

namespace {

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 0.0) {
  ASSERT_EQ(t.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "entry " << i;
}

// Compares the taped gradient of sum(f(inputs) * weights) with central
// differences for every input.
void check_gradient(std::vector<Tensor> inputs, const std::function<Tensor(const std::vector<Tensor>&)>& f,
                    std::uint64_t seed, double tol = 1e-5) {
  std::mt19937_64 rng(seed);
  const Tensor probe = f(inputs);
  const Tensor weights = random_tensor(probe.shape(), rng);
  auto loss_value = [&] { return sum(mul(f(inputs), weights)).item(); };
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(mul(f(inputs), weights)));
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto numeric = numeric_gradient(inputs[k], loss_value);
    const auto analytic = inputs[k].grad();
    ASSERT_EQ(numeric.size(), analytic.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      EXPECT_LT(testing_support::relative_error(analytic[i], numeric[i]), tol)
          << "input " << k << " entry " << i << " analytic " << analytic[i] << " numeric " << numeric[i];
    }
  }
}

Tensor away_from_zero(unirobust::Shape shape, std::mt19937_64& rng) {
  Tensor t = random_tensor(shape, rng);
  for (auto& v : t.mutable_data()) {
    if (std::abs(v) < 1e-2) v += 0.1;
  }
  return t;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const auto eye = Tensor::matrix({{1, 0}, {0, 1}});
  const auto m = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(matmul(eye, m), {1, 2, 3, 4});
}

TEST(Matmul, SelectsColumn) {
  expect_values(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}})), {2, 4});
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension);
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor({3, 3}, rng, 1.0, true);
  Tensor b = random_tensor({3, 3}, rng, 1.0, true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(matmul(a, b)));
  }
  const auto numeric = numeric_gradient(a, [&] { return sum(matmul(a, b)).item(); });
  for (std::size_t i = 0; i < numeric.size(); ++i) EXPECT_NEAR(a.grad()[i], numeric[i], 1e-6);
}

TEST(Elementwise, Examples) {
  EXPECT_EQ(tanh(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(gelu(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(max_with_zero(Tensor::scalar(-3.2)).item(), 0.0);
  EXPECT_EQ(max_with_zero(Tensor::scalar(1.5)).item(), 1.5);
  // x * Phi(x) at x = 1: Phi(1) = 0.841344746068543
  EXPECT_NEAR(gelu(Tensor::scalar(1.0)).item(), 0.841344746068543, 1e-15);
}

TEST(Elementwise, DispatchMatchesNamedOps) {
  const auto a = Tensor::vector({0.5, -1.0, 2.0});
  const auto b = Tensor::vector({1.5, 2.0, -0.5});
  expect_values(elementwise(Elementwise::add, a, b), {2.0, 1.0, 1.5});
  expect_values(elementwise(Elementwise::sub, a, b), {-1.0, -3.0, 2.5});
  expect_values(elementwise(Elementwise::mul, a, b), {0.75, -2.0, -1.0});
  expect_values(elementwise(Elementwise::max_with_zero, a), {0.5, 0.0, 2.0});
  expect_values(elementwise(Elementwise::exp, a), {std::exp(0.5), std::exp(-1.0), std::exp(2.0)}, 1e-15);
}

TEST(Elementwise, ScalarBroadcastOnEitherSide) {
  const auto v = Tensor::vector({1.0, 2.0});
  expect_values(add(v, Tensor::scalar(10.0)), {11.0, 12.0});
  expect_values(sub(Tensor::scalar(10.0), v), {9.0, 8.0});
  EXPECT_THROW(add(v, Tensor::vector({1.0, 2.0, 3.0})), Error);
}

TEST(Elementwise, LogOfNonPositiveIsDomainError) {
  try {
    log(Tensor::vector({1.0, 0.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::domain);
  }
  EXPECT_THROW(log(Tensor::scalar(-1.0)), Error);
}

TEST(Softmax, UniformInput) { expect_values(softmax(Tensor::vector({0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15); }

TEST(Softmax, LargeInputDoesNotOverflow) {
  const auto s = softmax(Tensor::vector({1000.0, 0.0}), 0);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_GE(s[1], 0.0);
  EXPECT_LT(s[1], 1e-300);
  EXPECT_TRUE(std::isfinite(s[1]));
}

TEST(Softmax, SumsToOneForLargeMagnitudes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_tensor({7}, rng, 1e4 / 3.0);
    const auto s = softmax(x, 0);
    double total = 0.0;
    for (double v : s.data()) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, MatrixAxes) {
  const auto m = Tensor::matrix({{0, 0}, {1, 1}});
  expect_values(softmax(m, 1), {0.5, 0.5, 0.5, 0.5});
  const auto cols = softmax(m, 0);
  EXPECT_NEAR(cols[0] + cols[2], 1.0, 1e-15);
  EXPECT_NEAR(cols[2], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  check_gradient({random_tensor({5}, rng)}, [](const auto& in) { return softmax(in[0], 0); }, 5, 1e-6);
}

TEST(Backward, LinearLossGivesOnes) {
  auto w = Tensor::vector({0.3, -1.0, 4.0}, true);
  Tape tape;
  TapeScope scope(tape);
  backward(sum(w));
  expect_values(Tensor::from({3}, {w.grad().begin(), w.grad().end()}), {1, 1, 1});
}

TEST(Backward, QuadraticLoss) {
  auto w = Tensor::vector({1, 2, 3}, true);
  Tape tape;
  TapeScope scope(tape);
  backward(sum(mul(w, w)));
  expect_values(Tensor::from({3}, {w.grad().begin(), w.grad().end()}), {2, 4, 6});
}

TEST(Backward, NonScalarLossIsContractError) {
  auto w = Tensor::vector({1, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  const auto y = mul(w, w);
  try {
    tape.backward(y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract);
  }
}

TEST(Backward, TwoConsumersAccumulate) {
  // loss = sum(3w) + sum(w*w): d/dw = 3 + 2w
  auto w = Tensor::vector({1.0, -2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  backward(add(sum(scale(w, 3.0)), sum(mul(w, w))));
  EXPECT_DOUBLE_EQ(w.grad()[0], 5.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], -1.0);
}

TEST(Backward, NothingRecordedWithoutTape) {
  auto w = Tensor::vector({1.0}, true);
  const auto y = mul(w, w);
  EXPECT_EQ(active_tape(), nullptr);
  EXPECT_THROW(backward(sum(y)), Error);
}

TEST(Backward, ResultsStayFinite) {
  std::mt19937_64 rng(9);
  auto x = random_tensor({4, 6}, rng, 30.0, true);
  Tape tape;
  TapeScope scope(tape);
  const auto y = log_softmax_rows(x);
  backward(sum(y));
  for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
  for (double g : x.grad()) EXPECT_TRUE(std::isfinite(g));
}

// Every differentiable op against finite differences on ten seeds.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  std::mt19937_64 rng(seed);
  check_gradient({random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
                 [](const auto& in) { return matmul(in[0], in[1]); }, seed);
  check_gradient({random_tensor({3, 4}, rng)}, [](const auto& in) { return transpose(in[0]); }, seed);
  check_gradient({random_tensor({5}, rng), random_tensor({5}, rng)},
                 [](const auto& in) { return add(in[0], in[1]); }, seed);
  check_gradient({random_tensor({5}, rng), random_tensor({5}, rng)},
                 [](const auto& in) { return sub(in[0], in[1]); }, seed);
  check_gradient({random_tensor({5}, rng), random_tensor({5}, rng)},
                 [](const auto& in) { return mul(in[0], in[1]); }, seed);
  check_gradient({random_tensor({5}, rng), random_tensor({1}, rng)},
                 [](const auto& in) { return mul(in[0], in[1]); }, seed);
  check_gradient({random_tensor({5}, rng)}, [](const auto& in) { return scale(in[0], -2.5); }, seed);
  check_gradient({away_from_zero({6}, rng)}, [](const auto& in) { return max_with_zero(in[0]); }, seed);
  check_gradient({random_tensor({6}, rng)}, [](const auto& in) { return tanh(in[0]); }, seed);
  check_gradient({random_tensor({6}, rng)}, [](const auto& in) { return gelu(in[0]); }, seed);
  check_gradient({random_tensor({6}, rng)}, [](const auto& in) { return exp(in[0]); }, seed);
  check_gradient({exp(random_tensor({6}, rng))}, [](const auto& in) { return log(in[0]); }, seed);
  check_gradient({random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                 [](const auto& in) { return add_row_vector(in[0], in[1]); }, seed);
  check_gradient({random_tensor({3, 4}, rng)}, [](const auto& in) { return softmax(in[0], 1); }, seed);
  check_gradient({random_tensor({3, 4}, rng)}, [](const auto& in) { return softmax(in[0], 0); }, seed);
  check_gradient({random_tensor({3, 4}, rng)}, [](const auto& in) { return log_softmax_rows(in[0]); }, seed);
  check_gradient({random_tensor({3, 4}, rng)}, [](const auto& in) { return mean(in[0]); }, seed);
  check_gradient({random_tensor({3, 4}, rng)}, [](const auto& in) { return reshape(in[0], {2, 6}); }, seed);
  check_gradient({random_tensor({5, 3}, rng)},
                 [](const auto& in) {
                   const std::vector<int> ids{4, 0, 4, 2};
                   return gather_rows(in[0], ids);
                 },
                 seed);
  check_gradient({random_tensor({3, 5}, rng)}, [](const auto& in) { return slice_cols(in[0], 1, 3); }, seed);
  check_gradient({random_tensor({3, 2}, rng), random_tensor({3, 1}, rng)},
                 [](const auto& in) { return concat_cols({in[0], in[1]}); }, seed);
  check_gradient({random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)},
                 [](const auto& in) { return concat_rows({in[0], in[1]}); }, seed);
  check_gradient({random_tensor({3, 4}, rng)}, [](const auto& in) { return row(in[0], 2); }, seed);
  check_gradient({random_tensor({3, 4}, rng)}, [](const auto& in) { return mean_rows(in[0]); }, seed);
  check_gradient({random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)},
                 [](const auto& in) { return layer_norm(in[0], in[1], in[2]); }, seed);
}

INSTANTIATE_TEST_SUITE_P(TenSeeds, OpGradients, ::testing::Range(1, 11));

TEST(Shapes, GatherOutOfRangeIsVocabularyError) {
  const std::vector<int> ids{3};
  try {
    gather_rows(Tensor::zeros({3, 2}), ids);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::vocabulary);
  }
}

TEST(Shapes, ProductOfShapeEqualsDataLength) {
  EXPECT_THROW(Tensor::from({2, 3}, {1, 2, 3}), Error);
  const auto t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), shape_size(t.shape()));
  EXPECT_EQ(t.at(1, 2), 6.0);
}

TEST(LayerNorm, RowsHaveZeroMeanAndUnitVariance) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor({4, 8}, rng, 3.0);
  const auto y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 8; ++c) m += y.at(r, c);
    m /= 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 8, 1.0, 1e-9);
  }
}
