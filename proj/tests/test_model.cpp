#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "support.hpp"
#include "unirobust/error.hpp"
#include "unirobust/losses.hpp"
#include "unirobust/model.hpp"
#include "unirobust/unitary.hpp"

using namespace unirobust;
using testing_support::random_tensor;

namespace {

ModelConfig small_config(std::size_t layers = 2, std::size_t hidden = 8, std::size_t classes = 2) {
  ModelConfig c;
  c.vocab_size = 20;
  c.max_seq_len = 10;
  c.hidden = hidden;
  c.expand = 4 * hidden;
  c.layers = layers;
  c.heads = 2;
  c.num_classes = classes;
  return c;
}

// Randomizes every parameter so biases, gains and offsets are exercised.
void scramble(Model& m, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& p : m.parameters()) {
    for (auto& v : p.value.mutable_data()) v = p.kind == ParamKind::norm_gain ? 1.0 + n(rng) : n(rng);
  }
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Mat affine(const Mat& x, const Mat& w, const std::vector<double>& b) {
  Mat y(x.size(), std::vector<double>(w[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
      y[i][j] = s;
    }
  return y;
}

Mat norm_rows(const Mat& x, const std::vector<double>& g, const std::vector<double>& o) {
  Mat y = x;
  for (auto& r : y) {
    double m = 0.0, v = 0.0;
    for (double a : r) m += a;
    m /= r.size();
    for (double a : r) v += (a - m) * (a - m);
    v /= r.size();
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = g[j] * (r[j] - m) / std::sqrt(v + 1e-12) + o[j];
  }
  return y;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

// Straight-line reference for one encoder block.
Mat reference_block(Model& m, const Mat& x, std::size_t l) {
  const std::string p = "block" + std::to_string(l) + ".";
  auto w = [&](const std::string& k) { return to_mat(m.find(p + k)->value); };
  auto b = [&](const std::string& k) { return vec(m.find(p + k)->value); };
  const Mat q = affine(x, w("query"), b("query.bias"));
  const Mat k = affine(x, w("key"), b("key.bias"));
  const Mat v = affine(x, w("value"), b("value.bias"));
  const std::size_t n = x.size(), h = m.config().hidden, heads = m.config().heads, d = h / heads;
  Mat ctx(n, std::vector<double>(h, 0.0));
  for (std::size_t hd = 0; hd < heads; ++hd) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double top = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += q[i][hd * d + c] * k[j][hd * d + c];
        s[j] = dot / std::sqrt(static_cast<double>(d));
        top = std::max(top, s[j]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - top));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < d; ++c) ctx[i][hd * d + c] += s[j] / z * v[j][hd * d + c];
    }
  }
  const Mat a = norm_rows(plus(x, affine(ctx, w("dense"), b("dense.bias"))), b("norm1.gain"), b("norm1.offset"));
  Mat e = affine(a, w("expand"), b("expand.bias"));
  for (auto& r : e)
    for (auto& t : r) t = t * 0.5 * std::erfc(-t / std::sqrt(2.0));
  return norm_rows(plus(a, affine(e, w("reduce"), b("reduce.bias"))), b("norm2.gain"), b("norm2.offset"));
}

}  // namespace

TEST(Census, TwelveLayers) {
  ModelConfig c = small_config(12);
  const Model m(c, 1);
  const auto census = m.census();
  EXPECT_EQ(census.unitary, 48u);
  EXPECT_EQ(census.non_unitary, 29u);
}

TEST(Census, FlagsOnlyAttentionWeights) {
  const Model m(small_config(3), 1);
  for (const auto& w : m.weights()) {
    const bool attention = w.name == WeightName::query || w.name == WeightName::key || w.name == WeightName::value ||
                           w.name == WeightName::dense;
    EXPECT_EQ(w.unitary_flag, attention) << to_string(w.name);
    if (w.unitary_flag) EXPECT_EQ(w.matrix.rows(), w.matrix.cols());
  }
}

TEST(Config, Validation) {
  ModelConfig c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.num_classes = 0;
  EXPECT_THROW(Model(c, 1), Error);
  c = small_config();
  c.layers = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(WeightNames, RoundTrip) {
  for (auto n : {WeightName::word, WeightName::query, WeightName::dense, WeightName::projection}) {
    EXPECT_EQ(weight_name_from_string(to_string(n)), n);
  }
  EXPECT_FALSE(weight_name_from_string("nonsense").has_value());
}

TEST(Embedding, SumIsAdditive) {
  Model m(small_config(), 3);
  scramble(m, 3);
  const std::vector<int> tokens{2, 7, 5};
  const std::vector<int> types{0, 1, 0};
  const auto e = m.embedding_sum(tokens, types);
  const auto& word = m.find("embed.word")->value;
  const auto& pos = m.find("embed.position")->value;
  const auto& typ = m.find("embed.token")->value;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      const double want = word.at(tokens[i], j) + pos.at(i, j) + typ.at(types[i], j);
      EXPECT_DOUBLE_EQ(e.at(i, j), want);
    }
}

TEST(Embedding, Errors) {
  const Model m(small_config(), 3);
  const std::vector<int> bad_token{2, 20};
  EXPECT_THROW(m.forward(bad_token), Error);
  const std::vector<int> too_long(11, 4);
  try {
    m.forward(too_long);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::length);
  }
  const std::vector<int> none;
  EXPECT_THROW(m.forward(none), Error);
  const std::vector<int> tokens{2, 4};
  const std::vector<int> bad_types{0, 2};
  EXPECT_THROW(m.forward(tokens, bad_types, false), Error);
}

TEST(Block, MatchesStraightLineReference) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Model m(small_config(), seed);
    scramble(m, seed);
    std::mt19937_64 rng(seed);
    const auto x = random_tensor({5, 8}, rng);
    for (std::size_t l = 0; l < 2; ++l) {
      const auto got = m.unit_block(x, l);
      const auto want = reference_block(m, to_mat(x), l);
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(got.at(i, j), want[i][j], 1e-10);
    }
  }
}

TEST(Block, PermutationEquivariant) {
  Model m(small_config(), 4);
  scramble(m, 4);
  std::mt19937_64 rng(4);
  const auto x = random_tensor({4, 8}, rng);
  const std::vector<int> perm{2, 0, 3, 1};
  const auto px = gather_rows(x, perm);
  const auto y = m.unit_block(x, 0);
  const auto py = m.unit_block(px, 0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(py.at(i, j), y.at(perm[i], j), 1e-12);
}

TEST(Block, SingleTokenAttendsToItself) {
  Model m(small_config(), 5);
  scramble(m, 5);
  std::mt19937_64 rng(5);
  const auto x = random_tensor({1, 8}, rng);
  const auto got = m.unit_block(x, 1);
  const auto want = reference_block(m, to_mat(x), 1);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(got.at(0, j), want[0][j], 1e-10);
  EXPECT_THROW(m.unit_block(x, 2), Error);
}

TEST(Forward, ZeroNetworkGivesZeroLogits) {
  Model m(small_config(), 6);
  for (auto& p : m.parameters())
    for (auto& v : p.value.mutable_data()) v = 0.0;
  const std::vector<int> tokens{2, 5, 6};
  const auto t = m.forward(tokens);
  for (double v : t.logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, LogitCountAndTraceLength) {
  for (std::size_t classes : {2, 3, 4}) {
    const Model m(small_config(3, 8, classes), 7);
    const std::vector<int> tokens{2, 5, 6, 9};
    const auto t = m.forward(tokens, true);
    EXPECT_EQ(t.logits.size(), classes);
    ASSERT_EQ(t.block_outputs.size(), 3u);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(t.sentence[j], t.block_outputs.back()[j]);
    EXPECT_TRUE(m.forward(tokens, false).block_outputs.empty());
  }
}

TEST(Forward, Deterministic) {
  const Model a(small_config(), 9);
  const Model b(small_config(), 9);
  const std::vector<int> tokens{2, 11, 3, 4};
  const auto x = a.forward(tokens).logits;
  const auto y = b.forward(tokens).logits;
  EXPECT_EQ(std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(double)), 0);
}

TEST(MaskedLM, ShapeAndTiedWeights) {
  Model m(small_config(), 10);
  scramble(m, 10);
  const std::vector<int> tokens{2, 5, 6};
  const std::vector<int> types(3, 0);
  const auto enc = m.encode(tokens, types);
  const auto out = m.masked_lm_head(enc);
  EXPECT_EQ(out.rows(), 3u);
  EXPECT_EQ(out.cols(), 20u);
}

TEST(MaskedLM, OrthonormalTableRecoversToken) {
  ModelConfig c = small_config(1, 8);
  c.vocab_size = 8;
  Model m(c, 11);
  auto& word = m.find("embed.word")->value;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) word.mutable_data()[i * 8 + j] = i == j ? 1.0 : 0.0;
  for (int t = 0; t < 8; ++t) {
    const auto scores = m.masked_lm_head(reshape(row(word, t), {1, 8}));
    EXPECT_EQ(argmax(vec(scores)), t);
  }
}

TEST(MaskedLM, WordTableGetsGradientFromBothUses) {
  Model m(small_config(1, 8), 12);
  scramble(m, 12);
  m.set_requires_grad(true);
  const std::vector<int> tokens{2, 5, 6};
  const std::vector<int> types(3, 0);
  const std::vector<int> targets{7, 8, 9};
  auto loss = [&] { return cross_entropy_loss(m.masked_lm_head(m.encode(tokens, types)), targets); };
  m.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss());
  }
  auto& word = m.find("embed.word")->value;
  const std::vector<double> analytic(word.grad().begin(), word.grad().end());
  const auto numeric = testing_support::numeric_gradient(word, [&] { return loss().item(); });
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    EXPECT_LT(testing_support::relative_error(analytic[i], numeric[i]), 1e-6) << i;
  }
}

TEST(Projection, LeavesClassifierUntouched) {
  Model m(small_config(), 13);
  scramble(m, 13);
  const auto before = m.find("head.classifier")->value.clone();
  m.apply_unitary_constraints();
  const auto& after = m.find("head.classifier")->value;
  EXPECT_EQ(std::memcmp(before.data().data(), after.data().data(), before.size() * sizeof(double)), 0);
  EXPECT_LT(m.max_unitarity_residual(), 1e-12);
  EXPECT_EQ(m.projection_calls(), 1u);
}

TEST(Projection, Idempotent) {
  Model m(small_config(), 14);
  scramble(m, 14);
  m.apply_unitary_constraints();
  const auto once = m.find("block1.key")->value.clone();
  m.apply_unitary_constraints();
  const auto& twice = m.find("block1.key")->value;
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-12);
}

TEST(Clone, IndependentStorage) {
  Model m(small_config(), 15);
  Model c = m.clone();
  c.find("block0.query")->value.mutable_data()[0] += 1.0;
  EXPECT_NE(c.find("block0.query")->value[0], m.find("block0.query")->value[0]);
  const std::vector<int> tokens{2, 4};
  EXPECT_NE(c.forward(tokens).logits[0], m.forward(tokens).logits[0]);
}

TEST(ResetClassifier, ChangesHeadOnly) {
  Model m(small_config(), 16);
  const auto word = m.find("embed.word")->value.clone();
  const auto head = m.find("head.projection")->value.clone();
  m.reset_classifier(99);
  EXPECT_NE(head[0], m.find("head.projection")->value[0]);
  EXPECT_EQ(word[0], m.find("embed.word")->value[0]);
}
