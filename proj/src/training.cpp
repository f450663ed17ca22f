#include "unirobust/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "unirobust/error.hpp"
#include "unirobust/losses.hpp"

namespace unirobust {

const char* to_string(LossKind loss) noexcept {
  return loss == LossKind::cross_entropy ? "cross_entropy" : "multi_margin";
}

void TrainPlan::validate() const {
  auto bad = [](const char* field, const std::string& why) { fail(ErrorCode::config, std::string(field) + " " + why); };
  if (!(lr_peak > 0.0) || !std::isfinite(lr_peak)) bad("lr_peak", "must be positive");
  if (total_steps != 0 && warmup_steps > total_steps) bad("warmup_steps", "must not exceed total_steps");
  if (total_steps == 0 && epochs == 0) bad("epochs", "must be positive when total_steps is 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) bad("adam_eps", "must be positive");
  if (!(weight_decay >= 0.0)) bad("weight_decay", "must be >= 0");
  if (batch_size == 0) bad("batch_size", "must be positive");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) bad("mask_prob", "must lie in [0, 1]");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) bad("epsilon", "must be >= 0");
}

TrainPlan TrainPlan::pretraining() {
  TrainPlan p;
  p.phase = Phase::pretrain;
  p.loss = LossKind::cross_entropy;
  p.lr_peak = 1e-4;
  p.warmup_steps = 7000;
  p.total_steps = 700000;
  p.batch_size = 16;
  p.mask_prob = 0.15;
  return p;
}

TrainPlan TrainPlan::finetuning() {
  TrainPlan p;
  p.phase = Phase::finetune;
  p.loss = LossKind::multi_margin;
  p.epsilon = 100.0;
  p.lr_peak = 5e-5;
  p.warmup_steps = 500;
  p.batch_size = 128;
  return p;
}

void TrainingLog::write_ndjson(std::ostream& out) const {
  for (const auto& r : records) {
    nlohmann::json j = {{"step", r.step}, {"lr", r.lr}, {"loss", r.loss}, {"max_unitarity_residual", r.max_unitarity_residual}};
    out << j.dump() << '\n';
  }
}

double lr_at(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, double lr_peak) {
  if (total_steps == 0) fail(ErrorCode::config, "schedule needs total_steps > 0");
  if (warmup_steps > total_steps) fail(ErrorCode::config, "warmup_steps exceeds total_steps");
  if (step > total_steps) fail(ErrorCode::contract, "step beyond total_steps");
  if (step <= warmup_steps) {
    if (warmup_steps == 0) return lr_peak;
    return lr_peak * (static_cast<double>(step) / static_cast<double>(warmup_steps));
  }
  return lr_peak * (static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup_steps));
}

double lr_at(std::size_t step, const TrainPlan& plan) {
  return lr_at(step, plan.warmup_steps, plan.total_steps, plan.lr_peak);
}

bool decays(const Parameter& p, const TrainPlan& plan) noexcept {
  if (p.kind != ParamKind::weight) return false;
  return !(p.unitary_flag && plan.unitary_enabled);
}

void adam_step(Model& model, AdamState& state, double lr, const TrainPlan& plan) {
  auto& params = model.parameters();
  if (state.m_.size() != params.size()) {
    state.m_.resize(params.size());
    state.v_.resize(params.size());
  }
  for (const auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) fail(ErrorCode::training, "non-finite gradient in parameter '" + p.key + "'");
    }
  }
  ++state.t_;
  const double c1 = 1.0 - std::pow(plan.beta1, static_cast<double>(state.t_));
  const double c2 = 1.0 - std::pow(plan.beta2, static_cast<double>(state.t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.value.has_grad()) continue;
    const auto g = p.value.grad();
    auto w = p.value.mutable_data();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    const double decay = decays(p, plan) ? lr * plan.weight_decay : 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = plan.beta1 * m[k] + (1.0 - plan.beta1) * g[k];
      v[k] = plan.beta2 * v[k] + (1.0 - plan.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + plan.adam_eps) + decay * w[k];
    }
  }
  if (plan.unitary_enabled) model.apply_unitary_constraints();
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::size_t epoch, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix(seed, epoch + 1));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Yields consecutive batches over shuffled epochs until `steps` batches were produced.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), seed_(seed) {}

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < std::min(batch_, n_)) {
      if (cursor_ >= order_.size()) {
        order_ = epoch_order(n_, epoch_++, seed_);
        cursor_ = 0;
        if (!out.empty()) break;  // batches do not straddle epochs
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  std::size_t n_, batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0, cursor_ = 0;
  std::vector<std::size_t> order_;
};

void check_finite(const Model& model) {
  for (const auto& p : model.parameters()) {
    for (double v : p.value.data()) {
      if (!std::isfinite(v)) fail(ErrorCode::training, "non-finite value in parameter '" + p.key + "'");
    }
  }
}

}  // namespace

std::vector<unsigned char> mask_pattern(std::size_t length, std::size_t index, const TrainPlan& plan) {
  std::mt19937_64 rng(mix(plan.seed ^ 0x6D61736BULL, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<unsigned char> flags(length, 0);
  for (std::size_t i = 1; i < length; ++i) flags[i] = u(rng) < plan.mask_prob ? 1 : 0;
  return flags;
}

TrainingLog pretrain(Model& model, const std::vector<std::vector<int>>& corpus, const TrainPlan& plan) {
  plan.validate();
  if (plan.phase != Phase::pretrain) fail(ErrorCode::config, "pretrain needs phase = pretrain");
  if (corpus.empty()) fail(ErrorCode::config, "empty pretraining corpus");
  if (plan.total_steps == 0) fail(ErrorCode::config, "pretraining needs total_steps > 0");

  std::vector<std::vector<unsigned char>> masks(corpus.size());
  for (std::size_t s = 0; s < corpus.size(); ++s) masks[s] = mask_pattern(corpus[s].size(), s, plan);

  model.set_requires_grad(true);
  if (plan.unitary_enabled) model.apply_unitary_constraints();
  TrainingLog log;
  AdamState state;
  BatchStream batches(corpus.size(), plan.batch_size, plan.seed);
  for (std::size_t step = 1; step <= plan.total_steps; ++step) {
    const auto batch = batches.next();
    std::size_t masked = 0;
    for (auto s : batch) masked += static_cast<std::size_t>(std::count(masks[s].begin(), masks[s].end(), 1));
    if (masked == 0 && plan.mask_prob > 0.0) {
      ++log.skipped_batches;
      continue;
    }
    Tape tape;
    TapeScope scope(tape);
    model.zero_grad();
    std::vector<Tensor> logits;
    std::vector<int> targets;
    std::vector<unsigned char> contributes;
    for (auto s : batch) {
      std::vector<int> input = corpus[s];
      for (std::size_t i = 0; i < input.size(); ++i) {
        if (masks[s][i]) input[i] = special::mask;
      }
      const std::vector<int> types(input.size(), 0);
      logits.push_back(model.masked_lm_head(model.encode(input, types)));
      targets.insert(targets.end(), corpus[s].begin(), corpus[s].end());
      contributes.insert(contributes.end(), masks[s].begin(), masks[s].end());
    }
    const Tensor loss = cross_entropy_loss(concat_rows(logits), targets, contributes);
    tape.backward(loss);
    const double lr = lr_at(step, plan);
    adam_step(model, state, lr, plan);
    log.records.push_back({step, lr, loss.item(), model.max_unitarity_residual()});
  }
  check_finite(model);
  model.zero_grad();
  return log;
}

std::size_t finetune_steps(std::size_t dataset_size, const TrainPlan& plan) {
  if (plan.total_steps != 0) return plan.total_steps;
  const std::size_t per_epoch = (dataset_size + plan.batch_size - 1) / plan.batch_size;
  return per_epoch * plan.epochs;
}

TrainingLog finetune(Model& model, const std::vector<LabeledExample>& dataset, const TrainPlan& plan) {
  plan.validate();
  if (plan.phase != Phase::finetune) fail(ErrorCode::config, "finetune needs phase = finetune");
  if (dataset.empty()) fail(ErrorCode::empty, "empty finetuning dataset");
  const auto classes = model.config().num_classes;
  for (const auto& ex : dataset) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= classes) {
      fail(ErrorCode::label, "label " + std::to_string(ex.label) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  TrainPlan effective = plan;
  effective.total_steps = finetune_steps(dataset.size(), plan);
  if (effective.warmup_steps > effective.total_steps) effective.warmup_steps = effective.total_steps;

  model.reset_classifier(mix(plan.seed, 0xC1A55ULL));
  model.set_requires_grad(true);
  if (effective.unitary_enabled) model.apply_unitary_constraints();
  TrainingLog log;
  AdamState state;
  BatchStream batches(dataset.size(), effective.batch_size, effective.seed);
  for (std::size_t step = 1; step <= effective.total_steps; ++step) {
    const auto batch = batches.next();
    Tape tape;
    TapeScope scope(tape);
    model.zero_grad();
    std::vector<Tensor> rows;
    std::vector<int> targets;
    for (auto i : batch) {
      const std::vector<int> types(dataset[i].tokens.size(), 0);
      rows.push_back(reshape(model.classify(model.encode(dataset[i].tokens, types)), {1, classes}));
      targets.push_back(dataset[i].label);
    }
    const Tensor logits = concat_rows(rows);
    const Tensor loss = effective.loss == LossKind::multi_margin ? multi_margin_loss(logits, targets, effective.epsilon)
                                                                 : cross_entropy_loss(logits, targets);
    tape.backward(loss);
    const double lr = lr_at(step, effective);
    adam_step(model, state, lr, effective);
    log.records.push_back({step, lr, loss.item(), model.max_unitarity_residual()});
  }
  check_finite(model);
  model.zero_grad();
  return log;
}

}  // namespace unirobust
