#include "unirobust/model.hpp"

#include <cmath>
#include <random>

#include "unirobust/error.hpp"
#include "unirobust/unitary.hpp"

namespace unirobust {

namespace {

constexpr double kInitStd = 0.02;

const char* const kWeightNames[] = {"word",  "position", "token",  "query",      "key",       "value",
                                    "dense", "expand",   "reduce", "classifier", "projection"};

Tensor gaussian(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros(std::size_t n) { return Tensor::zeros({n}, true); }
Tensor ones(std::size_t n) { return Tensor::full({n}, 1.0, true); }

void refill_gaussian(Tensor& t, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  for (auto& x : t.mutable_data()) x = dist(rng);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row_vector(matmul(x, w), b); }

}  // namespace

const char* to_string(WeightName name) noexcept { return kWeightNames[static_cast<int>(name)]; }

std::optional<WeightName> weight_name_from_string(std::string_view text) noexcept {
  for (int i = 0; i < 11; ++i) {
    if (text == kWeightNames[i]) return static_cast<WeightName>(i);
  }
  return std::nullopt;
}

bool is_unitary_weight(WeightName name) noexcept {
  return name == WeightName::query || name == WeightName::key || name == WeightName::value ||
         name == WeightName::dense;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) fail(ErrorCode::config, std::string("model.") + field + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(max_seq_len, "max_seq_len");
  positive(hidden, "hidden");
  positive(expand, "expand");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(num_classes, "num_classes");
  positive(token_types, "token_types");
  if (vocab_size <= static_cast<std::size_t>(special::count)) {
    fail(ErrorCode::config, "model.vocab_size must exceed the 4 special tokens");
  }
  if (hidden % heads != 0) fail(ErrorCode::config, "model.heads must divide model.hidden");
  if (expand == hidden) fail(ErrorCode::config, "model.expand must differ from model.hidden");
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto h = config_.hidden;
  word_ = gaussian({config_.vocab_size, h}, rng);
  position_ = gaussian({config_.max_seq_len, h}, rng);
  token_type_ = gaussian({config_.token_types, h}, rng);
  embed_norm_gain_ = ones(h);
  embed_norm_offset_ = zeros(h);
  blocks_.resize(config_.layers);
  for (auto& b : blocks_) {
    b.wq = gaussian({h, h}, rng);
    b.bq = zeros(h);
    b.wk = gaussian({h, h}, rng);
    b.bk = zeros(h);
    b.wv = gaussian({h, h}, rng);
    b.bv = zeros(h);
    b.wd = gaussian({h, h}, rng);
    b.bd = zeros(h);
    b.norm1_gain = ones(h);
    b.norm1_offset = zeros(h);
    b.we = gaussian({h, config_.expand}, rng);
    b.be = zeros(config_.expand);
    b.wr = gaussian({config_.expand, h}, rng);
    b.br = zeros(h);
    b.norm2_gain = ones(h);
    b.norm2_offset = zeros(h);
  }
  wc_ = gaussian({h, h}, rng);
  bc_ = zeros(h);
  wproj_ = gaussian({h, config_.num_classes}, rng);
  bproj_ = zeros(config_.num_classes);
  mlm_bias_ = zeros(config_.vocab_size);
  register_parameters();
}

void Model::register_parameters() {
  params_.clear();
  auto weight = [&](std::string key, WeightName name, std::optional<std::size_t> layer, const Tensor& t) {
    params_.push_back({std::move(key), ParamKind::weight, name, layer, is_unitary_weight(name), t});
  };
  auto other = [&](std::string key, ParamKind kind, std::optional<std::size_t> layer, const Tensor& t) {
    params_.push_back({std::move(key), kind, std::nullopt, layer, false, t});
  };
  weight("embed.word", WeightName::word, std::nullopt, word_);
  weight("embed.position", WeightName::position, std::nullopt, position_);
  weight("embed.token", WeightName::token, std::nullopt, token_type_);
  other("embed.norm.gain", ParamKind::norm_gain, std::nullopt, embed_norm_gain_);
  other("embed.norm.offset", ParamKind::norm_offset, std::nullopt, embed_norm_offset_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const std::string p = "block" + std::to_string(l) + ".";
    weight(p + "query", WeightName::query, l, b.wq);
    other(p + "query.bias", ParamKind::bias, l, b.bq);
    weight(p + "key", WeightName::key, l, b.wk);
    other(p + "key.bias", ParamKind::bias, l, b.bk);
    weight(p + "value", WeightName::value, l, b.wv);
    other(p + "value.bias", ParamKind::bias, l, b.bv);
    weight(p + "dense", WeightName::dense, l, b.wd);
    other(p + "dense.bias", ParamKind::bias, l, b.bd);
    other(p + "norm1.gain", ParamKind::norm_gain, l, b.norm1_gain);
    other(p + "norm1.offset", ParamKind::norm_offset, l, b.norm1_offset);
    weight(p + "expand", WeightName::expand, l, b.we);
    other(p + "expand.bias", ParamKind::bias, l, b.be);
    weight(p + "reduce", WeightName::reduce, l, b.wr);
    other(p + "reduce.bias", ParamKind::bias, l, b.br);
    other(p + "norm2.gain", ParamKind::norm_gain, l, b.norm2_gain);
    other(p + "norm2.offset", ParamKind::norm_offset, l, b.norm2_offset);
  }
  weight("head.classifier", WeightName::classifier, std::nullopt, wc_);
  other("head.classifier.bias", ParamKind::bias, std::nullopt, bc_);
  weight("head.projection", WeightName::projection, std::nullopt, wproj_);
  other("head.projection.bias", ParamKind::bias, std::nullopt, bproj_);
  other("mlm.bias", ParamKind::bias, std::nullopt, mlm_bias_);
}

Tensor Model::embedding_sum(std::span<const int> tokens, std::span<const int> token_types) const {
  if (tokens.empty()) fail(ErrorCode::length, "empty token sequence");
  if (tokens.size() > config_.max_seq_len) {
    fail(ErrorCode::length, "sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                                std::to_string(config_.max_seq_len));
  }
  if (token_types.size() != tokens.size()) {
    fail(ErrorCode::dimension, "token_type_ids length does not match tokens");
  }
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      fail(ErrorCode::vocabulary, "token id " + std::to_string(id) + " outside vocabulary of " +
                                      std::to_string(config_.vocab_size));
    }
  }
  for (int t : token_types) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.token_types) {
      fail(ErrorCode::vocabulary, "token type " + std::to_string(t) + " outside " + std::to_string(config_.token_types));
    }
  }
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  return add(add(gather_rows(word_, tokens), gather_rows(position_, positions)), gather_rows(token_type_, token_types));
}

Tensor Model::embed(std::span<const int> tokens, std::span<const int> token_types) const {
  return layer_norm(embedding_sum(tokens, token_types), embed_norm_gain_, embed_norm_offset_);
}

Tensor Model::unit_block(const Tensor& x, std::size_t layer_index) const {
  if (layer_index >= blocks_.size()) {
    fail(ErrorCode::contract, "layer index " + std::to_string(layer_index) + " outside " + std::to_string(blocks_.size()));
  }
  const Block& b = blocks_[layer_index];
  const std::size_t head_dim = config_.hidden / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const Tensor q = linear(x, b.wq, b.bq);
  const Tensor k = linear(x, b.wk, b.bk);
  const Tensor v = linear(x, b.wv, b.bv);
  std::vector<Tensor> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Tensor qh = slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = slice_cols(v, h * head_dim, head_dim);
    const Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    heads.push_back(matmul(weights, vh));
  }
  const Tensor context = heads.size() == 1 ? heads.front() : concat_cols(heads);
  const Tensor attended = layer_norm(add(x, linear(context, b.wd, b.bd)), b.norm1_gain, b.norm1_offset);
  const Tensor ff = linear(gelu(linear(attended, b.we, b.be)), b.wr, b.br);
  return layer_norm(add(attended, ff), b.norm2_gain, b.norm2_offset);
}

Tensor Model::encode(std::span<const int> tokens, std::span<const int> token_types,
                     std::vector<Tensor>* block_means) const {
  Tensor x = embed(tokens, token_types);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    x = unit_block(x, l);
    if (block_means) block_means->push_back(mean_rows(x));
  }
  return x;
}

Tensor Model::classify(const Tensor& encoded) const {
  const Tensor first = reshape(row(encoded, 0), {1, config_.hidden});
  const Tensor pooled = tanh(linear(first, wc_, bc_));
  return reshape(linear(pooled, wproj_, bproj_), {config_.num_classes});
}

ForwardTrace Model::forward(std::span<const int> tokens, std::span<const int> token_types, bool capture_trace) const {
  ForwardTrace trace;
  std::vector<Tensor> means;
  const Tensor encoded = encode(tokens, token_types, &means);
  trace.logits = classify(encoded);
  trace.sentence = means.back();
  if (capture_trace) trace.block_outputs = std::move(means);
  return trace;
}

ForwardTrace Model::forward(std::span<const int> tokens, bool capture_trace) const {
  const std::vector<int> types(tokens.size(), 0);
  return forward(tokens, types, capture_trace);
}

Tensor Model::masked_lm_head(const Tensor& encoded) const {
  return add_row_vector(matmul(encoded, transpose(word_)), mlm_bias_);
}

void Model::apply_unitary_constraints() {
  ++projection_calls_;
  for (auto& p : params_) {
    if (!p.unitary_flag) continue;
    const Tensor u = project_unitary(p.value);
    std::copy(u.data().begin(), u.data().end(), p.value.mutable_data().begin());
  }
}

double Model::max_unitarity_residual() const {
  double worst = 0.0;
  for (const auto& p : params_) {
    if (p.unitary_flag) worst = std::max(worst, unitarity_residual(p.value));
  }
  return worst;
}

void Model::reset_classifier(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  refill_gaussian(wc_, rng);
  refill_gaussian(wproj_, rng);
  for (auto& v : bc_.mutable_data()) v = 0.0;
  for (auto& v : bproj_.mutable_data()) v = 0.0;
}

std::vector<WeightEntry> Model::weights() const {
  std::vector<WeightEntry> out;
  for (const auto& p : params_) {
    if (p.kind == ParamKind::weight) out.push_back({*p.weight, p.layer_index, p.value, p.unitary_flag});
  }
  return out;
}

UnitaryCensus Model::census() const {
  UnitaryCensus c;
  for (const auto& w : weights()) (w.unitary_flag ? c.unitary : c.non_unitary)++;
  return c;
}

Parameter* Model::find(std::string_view key) {
  for (auto& p : params_) {
    if (p.key == key) return &p;
  }
  return nullptr;
}

void Model::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void Model::set_requires_grad(bool value) {
  for (auto& p : params_) p.value.set_requires_grad(value);
}

Model Model::clone() const {
  Model copy = *this;
  auto dup = [](Tensor& t) {
    const bool rg = t.requires_grad();
    t = t.clone();
    t.set_requires_grad(rg);
  };
  dup(copy.word_);
  dup(copy.position_);
  dup(copy.token_type_);
  dup(copy.embed_norm_gain_);
  dup(copy.embed_norm_offset_);
  for (auto& b : copy.blocks_) {
    for (Tensor* t : {&b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wd, &b.bd, &b.norm1_gain, &b.norm1_offset, &b.we,
                      &b.be, &b.wr, &b.br, &b.norm2_gain, &b.norm2_offset}) {
      dup(*t);
    }
  }
  dup(copy.wc_);
  dup(copy.bc_);
  dup(copy.wproj_);
  dup(copy.bproj_);
  dup(copy.mlm_bias_);
  copy.register_parameters();
  return copy;
}

}  // namespace unirobust
