#include "unirobust/unirobust.h"

#include <new>
#include <string>

#include "unirobust/checkpoint.hpp"
#include "unirobust/error.hpp"
#include "unirobust/losses.hpp"
#include "unirobust/model.hpp"
#include "unirobust/pipeline.hpp"
#include "unirobust/training.hpp"
#include "unirobust/unitary.hpp"

struct ur_model {
  unirobust::Model model;
};

namespace {

thread_local std::string last_error;

ur_status status_of(unirobust::ErrorCode code) {
  using unirobust::ErrorCode;
  switch (code) {
    case ErrorCode::dimension: return UR_ERR_DIMENSION;
    case ErrorCode::domain: return UR_ERR_DOMAIN;
    case ErrorCode::contract: return UR_ERR_CONTRACT;
    case ErrorCode::vocabulary: return UR_ERR_VOCABULARY;
    case ErrorCode::length: return UR_ERR_LENGTH;
    case ErrorCode::label: return UR_ERR_LABEL;
    case ErrorCode::config: return UR_ERR_CONFIG;
    case ErrorCode::io: return UR_ERR_IO;
    case ErrorCode::empty: return UR_ERR_EMPTY;
    case ErrorCode::stage_dependency: return UR_ERR_STAGE_DEPENDENCY;
    case ErrorCode::training: return UR_ERR_TRAINING;
    case ErrorCode::conditioning: return UR_ERR_CONDITIONING;
    case ErrorCode::position: return UR_ERR_POSITION;
    case ErrorCode::usage: return UR_ERR_USAGE;
  }
  return UR_ERR_INTERNAL;
}

template <class F>
ur_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return UR_OK;
  } catch (const unirobust::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown failure";
  }
  return UR_ERR_INTERNAL;
}

ur_status null_argument(const char* name) {
  last_error = std::string(name) + " is NULL";
  return UR_ERR_NULL_ARGUMENT;
}

unirobust::ModelConfig to_cpp(const ur_model_config& c) {
  unirobust::ModelConfig m;
  m.vocab_size = c.vocab_size;
  m.max_seq_len = c.max_seq_len;
  m.hidden = c.hidden;
  m.expand = c.expand;
  m.layers = c.layers;
  m.heads = c.heads;
  m.num_classes = c.num_classes;
  m.token_types = c.token_types;
  return m;
}

}  // namespace

extern "C" {

const char* ur_last_error(void) { return last_error.c_str(); }

const char* ur_status_name(ur_status status) {
  switch (status) {
    case UR_OK: return "ok";
    case UR_ERR_NULL_ARGUMENT: return "null_argument";
    case UR_ERR_INTERNAL: return "internal";
    default: return unirobust::to_string(static_cast<unirobust::ErrorCode>(status - 1));
  }
}

const char* ur_version(void) { return "0.1.0"; }

ur_status ur_run(const char* command, const char* config_path, const uint64_t* seed, const char* out_dir,
                 const char* const* overrides, size_t override_count) {
  if (!command) return null_argument("command");
  if (!config_path) return null_argument("config_path");
  if (override_count && !overrides) return null_argument("overrides");
  return guarded([&] {
    unirobust::RunOptions options;
    if (seed) options.seed = *seed;
    if (out_dir) options.out = out_dir;
    for (size_t i = 0; i < override_count; ++i) {
      if (!overrides[i]) unirobust::fail(unirobust::ErrorCode::usage, "NULL override");
      options.overrides.emplace_back(overrides[i]);
    }
    unirobust::run(command, config_path, options);
  });
}

void ur_model_config_default(ur_model_config* config) {
  if (!config) return;
  const unirobust::ModelConfig m;
  *config = {m.vocab_size, m.max_seq_len, m.hidden, m.expand, m.layers, m.heads, m.num_classes, m.token_types};
}

ur_status ur_model_create(const ur_model_config* config, uint64_t seed, ur_model** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] { *out = new ur_model{unirobust::Model(to_cpp(*config), seed)}; });
}

ur_status ur_model_load(const char* path, ur_model** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] { *out = new ur_model{unirobust::load_checkpoint(path)}; });
}

ur_status ur_model_save(const ur_model* model, const char* path) {
  if (!model) return null_argument("model");
  if (!path) return null_argument("path");
  return guarded([&] { unirobust::save_checkpoint(model->model, path); });
}

void ur_model_free(ur_model* model) { delete model; }

ur_status ur_model_get_config(const ur_model* model, ur_model_config* out) {
  if (!model) return null_argument("model");
  if (!out) return null_argument("out");
  const auto& m = model->model.config();
  *out = {m.vocab_size, m.max_seq_len, m.hidden, m.expand, m.layers, m.heads, m.num_classes, m.token_types};
  return UR_OK;
}

ur_status ur_model_census(const ur_model* model, size_t* unitary, size_t* non_unitary) {
  if (!model) return null_argument("model");
  if (!unitary || !non_unitary) return null_argument("census output");
  const auto c = model->model.census();
  *unitary = c.unitary;
  *non_unitary = c.non_unitary;
  return UR_OK;
}

ur_status ur_model_apply_unitary(ur_model* model) {
  if (!model) return null_argument("model");
  return guarded([&] { model->model.apply_unitary_constraints(); });
}

ur_status ur_model_max_unitarity_residual(const ur_model* model, double* out) {
  if (!model) return null_argument("model");
  if (!out) return null_argument("out");
  return guarded([&] { *out = model->model.max_unitarity_residual(); });
}

ur_status ur_model_logits(const ur_model* model, const int32_t* tokens, size_t token_count, double* logits,
                          size_t logits_len) {
  if (!model) return null_argument("model");
  if (!tokens) return null_argument("tokens");
  if (!logits) return null_argument("logits");
  return guarded([&] {
    if (logits_len != model->model.config().num_classes) {
      unirobust::fail(unirobust::ErrorCode::dimension, "logits buffer length differs from num_classes");
    }
    const std::vector<int> ids(tokens, tokens + token_count);
    const auto trace = model->model.forward(ids, false);
    for (size_t i = 0; i < logits_len; ++i) logits[i] = trace.logits.data()[i];
  });
}

ur_status ur_project_unitary(const double* w, size_t n, double* out) {
  if (!w) return null_argument("w");
  if (!out) return null_argument("out");
  return guarded([&] {
    const auto u = unirobust::project_unitary(unirobust::Tensor::from({n, n}, std::vector<double>(w, w + n * n)));
    for (size_t i = 0; i < n * n; ++i) out[i] = u.data()[i];
  });
}

ur_status ur_lr_at(size_t step, size_t warmup_steps, size_t total_steps, double lr_peak, double* out) {
  if (!out) return null_argument("out");
  return guarded([&] { *out = unirobust::lr_at(step, warmup_steps, total_steps, lr_peak); });
}

ur_status ur_multi_margin_loss(const double* logits, size_t rows, size_t classes, const int32_t* targets,
                               double epsilon, double* out) {
  if (!logits) return null_argument("logits");
  if (!targets) return null_argument("targets");
  if (!out) return null_argument("out");
  return guarded([&] {
    const auto t = unirobust::Tensor::from({rows, classes}, std::vector<double>(logits, logits + rows * classes));
    const std::vector<int> y(targets, targets + rows);
    *out = unirobust::multi_margin_loss(t, y, epsilon).item();
  });
}

}  // extern "C"
