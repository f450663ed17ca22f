#pragma once

// Adam with linear warmup/decay, decoupled weight decay and per-step unitary
// re-projection; masked-LM pretraining and classification finetuning loops.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "unirobust/model.hpp"

namespace unirobust {

enum class Phase { pretrain, finetune };
enum class LossKind { cross_entropy, multi_margin };

const char* to_string(LossKind loss) noexcept;

struct TrainPlan {
  Phase phase = Phase::finetune;
  LossKind loss = LossKind::multi_margin;
  double epsilon = 100.0;
  double lr_peak = 5e-5;
  std::size_t warmup_steps = 500;
  // 0 means "derive from epochs and the dataset size".
  std::size_t total_steps = 0;
  std::size_t epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t batch_size = 128;
  double mask_prob = 0.15;
  bool unitary_enabled = true;
  std::uint64_t seed = 0;

  void validate() const;

  // Table-style defaults for each phase.
  static TrainPlan pretraining();
  static TrainPlan finetuning();
};

struct LabeledExample {
  std::vector<int> tokens;  // [CLS] first
  int label = 0;
};

struct LogRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double max_unitarity_residual = 0.0;
};

struct TrainingLog {
  std::vector<LogRecord> records;
  std::size_t skipped_batches = 0;  // masked-LM batches that drew no masked position

  // One JSON object per line: {"step":..,"lr":..,"loss":..,"max_unitarity_residual":..}
  void write_ndjson(std::ostream& out) const;
};

// Linear warmup from 0 to lr_peak at warmup_steps, then linear decay to 0 at total.
double lr_at(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, double lr_peak);
double lr_at(std::size_t step, const TrainPlan& plan);

class AdamState {
 public:
  std::size_t step() const noexcept { return t_; }
  // First/second moments for parameter index i (empty before its first update).
  const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  friend void adam_step(Model&, AdamState&, double, const TrainPlan&);
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Applies one Adam update from the gradients stored on the model's parameters,
// then decoupled weight decay, then (if enabled) the unitary projection.
// Throws training error naming the parameter when a gradient is non-finite.
void adam_step(Model& model, AdamState& state, double lr, const TrainPlan& plan);

// True when decoupled weight decay applies to `p` under `plan`.
bool decays(const Parameter& p, const TrainPlan& plan) noexcept;

TrainingLog pretrain(Model& model, const std::vector<std::vector<int>>& corpus, const TrainPlan& plan);
TrainingLog finetune(Model& model, const std::vector<LabeledExample>& dataset, const TrainPlan& plan);

// Number of optimizer steps a finetune run over `dataset_size` examples takes.
std::size_t finetune_steps(std::size_t dataset_size, const TrainPlan& plan);

// Fixed masked-LM pattern for sentence `index`: one flag per position, [CLS] never masked.
std::vector<unsigned char> mask_pattern(std::size_t length, std::size_t index, const TrainPlan& plan);

}  // namespace unirobust
