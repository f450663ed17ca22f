#ifndef UNIROBUST_H
#define UNIROBUST_H

/* C interface to the unirobust library. Every call returns a ur_status; on
 * failure ur_last_error() holds a message for the calling thread. Handles are
 * opaque and released with their matching *_free function. */

#include <stddef.h>
#include <stdint.h>

#if defined(UNIROBUST_BUILDING_LIBRARY)
#define UR_API __attribute__((visibility("default")))
#else
#define UR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ur_status {
  UR_OK = 0,
  UR_ERR_DIMENSION,
  UR_ERR_DOMAIN,
  UR_ERR_CONTRACT,
  UR_ERR_VOCABULARY,
  UR_ERR_LENGTH,
  UR_ERR_LABEL,
  UR_ERR_CONFIG,
  UR_ERR_IO,
  UR_ERR_EMPTY,
  UR_ERR_STAGE_DEPENDENCY,
  UR_ERR_TRAINING,
  UR_ERR_CONDITIONING,
  UR_ERR_POSITION,
  UR_ERR_USAGE,
  UR_ERR_NULL_ARGUMENT,
  UR_ERR_INTERNAL
} ur_status;

typedef struct ur_model ur_model;

typedef struct ur_model_config {
  size_t vocab_size;
  size_t max_seq_len;
  size_t hidden;
  size_t expand;
  size_t layers;
  size_t heads;
  size_t num_classes;
  size_t token_types;
} ur_model_config;

UR_API const char* ur_last_error(void);
UR_API const char* ur_status_name(ur_status status);
UR_API const char* ur_version(void);

/* Pipeline stage: command is one of pretrain, finetune, attack, analyze, sweep,
 * ablation, synth. seed and out_dir may be NULL; overrides are "section.key=value". */
UR_API ur_status ur_run(const char* command, const char* config_path, const uint64_t* seed, const char* out_dir,
                        const char* const* overrides, size_t override_count);

UR_API void ur_model_config_default(ur_model_config* config);
UR_API ur_status ur_model_create(const ur_model_config* config, uint64_t seed, ur_model** out);
UR_API ur_status ur_model_load(const char* path, ur_model** out);
UR_API ur_status ur_model_save(const ur_model* model, const char* path);
UR_API void ur_model_free(ur_model* model);
UR_API ur_status ur_model_get_config(const ur_model* model, ur_model_config* out);
UR_API ur_status ur_model_census(const ur_model* model, size_t* unitary, size_t* non_unitary);
UR_API ur_status ur_model_apply_unitary(ur_model* model);
UR_API ur_status ur_model_max_unitarity_residual(const ur_model* model, double* out);
/* logits must hold num_classes values. */
UR_API ur_status ur_model_logits(const ur_model* model, const int32_t* tokens, size_t token_count, double* logits,
                                 size_t logits_len);

/* Row-major n x n in and out; out may alias w. */
UR_API ur_status ur_project_unitary(const double* w, size_t n, double* out);
UR_API ur_status ur_lr_at(size_t step, size_t warmup_steps, size_t total_steps, double lr_peak, double* out);
UR_API ur_status ur_multi_margin_loss(const double* logits, size_t rows, size_t classes, const int32_t* targets,
                                      double epsilon, double* out);

#ifdef __cplusplus
}
#endif

#endif /* UNIROBUST_H */
