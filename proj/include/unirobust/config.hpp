#pragma once

// Declarative run configuration: an INI file with one section per stage,
// overridable key by key as `section.key=value`.
//
//   [run]       seed, out
//   [data]      train, test, pretrain, synonyms, num_classes, max_vocab, attack_samples
//   [model]     max_seq_len, hidden, expand, layers, heads, token_types
//   [pretrain]  steps, warmup, lr, batch_size, mask_prob, weight_decay, unitary, beta1, beta2, adam_eps
//   [finetune]  loss, epsilon, lr, warmup, epochs, steps, batch_size, weight_decay, unitary, beta1, beta2, adam_eps
//   [attack]    recipes, query_budget, similarity_threshold, max_perturb_fraction, neighbors, typo_variants, workers
//   [sweep]     epsilons
//
// Relative paths are resolved against the directory holding the config file.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "unirobust/attacks.hpp"
#include "unirobust/model.hpp"
#include "unirobust/training.hpp"

namespace unirobust {

struct DataConfig {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path pretrain;  // unlabeled corpus; empty: reuse train texts
  std::filesystem::path synonyms;
  std::size_t num_classes = 2;
  std::size_t max_vocab = 256;
  std::size_t attack_samples = 200;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  DataConfig data;
  ModelConfig model;
  TrainPlan pretrain;
  TrainPlan finetune;
  std::vector<AttackKind> recipes{AttackKind::typo, AttackKind::embed_synonym, AttackKind::thesaurus_synonym};
  AttackRecipe attack;  // shared settings; kind is taken from `recipes`
  std::size_t workers = 1;
  std::vector<double> epsilons;

  RunConfig();
  // Throws config error naming the offending `section.key`.
  void validate() const;
  std::vector<AttackRecipe> recipe_list() const;
  // Applies `seed` to both training plans.
  void set_seed(std::uint64_t value);
};

// Sets one `section.key` from text. Throws config error for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value,
                      const std::filesystem::path& base_dir = {});

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                       const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace unirobust
