#pragma once

// Stage orchestration behind the command line. Every stage reads the config
// and prior artifacts under the output directory and writes its own:
//
//   <out>/checkpoints/  vocab.txt, pretrained.ckpt, finetuned.ckpt
//   <out>/logs/         pretrain.ndjson, finetune.ndjson
//   <out>/reports/      attack_<recipe>.ndjson, attack_summary.csv, boundary_stats.csv,
//                       propagation.csv, sweep.csv, ablation.csv
//   <out>/run_meta.json wall-clock metadata (the only non-reproducible file)

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unirobust/analysis.hpp"
#include "unirobust/config.hpp"
#include "unirobust/training.hpp"

namespace unirobust {

struct Layout {
  std::filesystem::path root;

  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path vocab() const { return checkpoints() / "vocab.txt"; }
  std::filesystem::path pretrained() const { return checkpoints() / "pretrained.ckpt"; }
  std::filesystem::path finetuned() const { return checkpoints() / "finetuned.ckpt"; }
};

// The four ablation trims: (loss, unitary) pairs.
struct Trim {
  const char* name;
  LossKind loss;
  bool unitary;
};
const std::vector<Trim>& ablation_trims();

const std::vector<std::string>& pipeline_commands();

// Runs one stage. Throws usage error for an unknown command.
void run_stage(const std::string& command, const RunConfig& config);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::vector<std::string> overrides;
};

// Loads the config, applies options, runs the stage.
void run(const std::string& command, const std::filesystem::path& config_path, const RunOptions& options);

// Helpers shared with tests and the acceptance suite.
std::vector<LabeledExample> to_examples(const Corpus& corpus, const Tokenizer& tokenizer);
std::vector<LabeledText> to_texts(const Corpus& corpus, std::size_t limit);

}  // namespace unirobust
