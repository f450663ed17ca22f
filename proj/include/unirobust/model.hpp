#pragma once

// Toy post-norm transformer encoder classifier.
//
//   tokens -> word + position + token-type embeddings -> LayerNorm
//          -> `layers` unit blocks (multi-head attention through W_q, W_k, W_v,
//             output through W_d, residual + LayerNorm, W_e -> GELU -> W_r,
//             residual + LayerNorm)
//          -> first ([CLS]) row -> W_c -> tanh -> W_proj -> logits
//
// Every square attention weight (query, key, value, dense) carries the unitary
// flag; the classifier W_c is square but left free. Linear layers compute x W + b
// with W stored as [in x out].

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unirobust/tensor.hpp"

namespace unirobust {

// Fixed special token ids shared by the tokenizer, the masked-LM loop and the
// attack harness.
namespace special {
inline constexpr int pad = 0;
inline constexpr int mask = 1;
inline constexpr int cls = 2;
inline constexpr int unk = 3;
inline constexpr int count = 4;
}  // namespace special

struct ModelConfig {
  std::size_t vocab_size = 256;
  std::size_t max_seq_len = 32;
  std::size_t hidden = 32;
  std::size_t expand = 128;
  std::size_t layers = 3;
  std::size_t heads = 2;
  std::size_t num_classes = 2;
  std::size_t token_types = 2;

  // Throws config error naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class WeightName { word, position, token, query, key, value, dense, expand, reduce, classifier, projection };

const char* to_string(WeightName name) noexcept;
std::optional<WeightName> weight_name_from_string(std::string_view text) noexcept;
// True for the attention weights that are re-projected after every step.
bool is_unitary_weight(WeightName name) noexcept;

struct WeightEntry {
  WeightName name;
  std::optional<std::size_t> layer_index;
  Tensor matrix;
  bool unitary_flag = false;
};

enum class ParamKind { weight, bias, norm_gain, norm_offset };

// Every trainable tensor of the model, in a fixed order. Weight matrices carry
// their WeightName; biases and LayerNorm vectors only a key.
struct Parameter {
  std::string key;  // e.g. "block1.query", "block1.query.bias", "embed.norm.gain"
  ParamKind kind = ParamKind::weight;
  std::optional<WeightName> weight;
  std::optional<std::size_t> layer_index;
  bool unitary_flag = false;
  Tensor value;
};

struct ForwardTrace {
  std::vector<Tensor> block_outputs;  // mean-pooled activations after each block
  Tensor logits;                      // [num_classes]
  Tensor sentence;                    // mean-pooled final-block activations
};

struct UnitaryCensus {
  std::size_t unitary = 0;
  std::size_t non_unitary = 0;
};

class Model {
 public:
  // Gaussian(0, 0.02) matrices, zero biases, unit LayerNorm gains.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  // W_w[token] + W_p[position] + W_t[type], before normalization.
  Tensor embedding_sum(std::span<const int> tokens, std::span<const int> token_types) const;
  Tensor embed(std::span<const int> tokens, std::span<const int> token_types) const;
  Tensor unit_block(const Tensor& x, std::size_t layer_index) const;
  // Runs embeddings and all blocks; optionally records per-block mean pools.
  Tensor encode(std::span<const int> tokens, std::span<const int> token_types,
                std::vector<Tensor>* block_means = nullptr) const;
  // Classification head applied to an encoded sequence.
  Tensor classify(const Tensor& encoded) const;
  ForwardTrace forward(std::span<const int> tokens, std::span<const int> token_types, bool capture_trace) const;
  // All-zero token types.
  ForwardTrace forward(std::span<const int> tokens, bool capture_trace = false) const;
  // Vocabulary logits [seq x vocab] through the transposed word embedding.
  Tensor masked_lm_head(const Tensor& encoded) const;

  // Replaces every flagged weight by its orthogonal projection in place.
  void apply_unitary_constraints();
  std::size_t projection_calls() const noexcept { return projection_calls_; }
  // max |W^T W - I| over flagged weights.
  double max_unitarity_residual() const;

  // Fresh Gaussian classifier and projection layers (per finetuning run).
  void reset_classifier(std::uint64_t seed);

  std::vector<WeightEntry> weights() const;
  UnitaryCensus census() const;
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  const Tensor& word_embeddings() const { return word_; }
  Parameter* find(std::string_view key);

  void zero_grad();
  void set_requires_grad(bool value);

  // Deep copy with independent storage; safe to evaluate on another thread.
  Model clone() const;

 private:
  struct Block {
    Tensor wq, bq, wk, bk, wv, bv, wd, bd;
    Tensor norm1_gain, norm1_offset;
    Tensor we, be, wr, br;
    Tensor norm2_gain, norm2_offset;
  };

  void register_parameters();

  ModelConfig config_;
  Tensor word_, position_, token_type_;
  Tensor embed_norm_gain_, embed_norm_offset_;
  std::vector<Block> blocks_;
  Tensor wc_, bc_, wproj_, bproj_;
  Tensor mlm_bias_;
  std::vector<Parameter> params_;
  std::size_t projection_calls_ = 0;
};

}  // namespace unirobust
