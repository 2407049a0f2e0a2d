#ifndef TRANSLUTION_CAPI_H
#define TRANSLUTION_CAPI_H

/* C interface to the translution core. All functions return tl_status; on
 * failure tl_last_error() describes the problem (thread-local). Strings
 * returned through char** are heap-allocated and released with
 * tl_free_string. Handles are opaque and released with their _close call. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tl_status {
  TL_OK = 0,
  TL_ERR_INTERNAL = 1,
  TL_ERR_ARGUMENT = 2,
  TL_ERR_IO = 3
} tl_status;

const char* tl_version(void);
const char* tl_last_error(void);
void tl_free_string(char* s);

/* Deterministic single-thread mode (the test default); affects training. */
tl_status tl_set_deterministic(int enabled);

/* ------------------------------------------------------------------ data */

typedef struct tl_dataset tl_dataset;

/* Writes synthetic glyph sprites as IDX train/test pairs into dir. */
tl_status tl_gen_sprites(const char* dir, long long train_count, long long test_count,
                         unsigned long long seed);

/* Builds a canvas dataset from IDX files and saves it (container + sidecar).
 * mode: "static" | "dynamic". sprite < native size pools the sprites down.
 * limit > 0 keeps only the first `limit` sprites. */
tl_status tl_gen_canvas(const char* idx_images, const char* idx_labels, const char* mode,
                        long long canvas, long long sprite, unsigned long long seed,
                        long long limit, const char* out_path);

tl_status tl_dataset_open(tl_dataset** out, const char* path);
tl_status tl_dataset_info(tl_dataset* d, char** json_out);
void tl_dataset_close(tl_dataset* d);

/* ----------------------------------------------------------------- model */

typedef struct tl_model tl_model;

tl_status tl_model_create(tl_model** out, const char* spec_json);
tl_status tl_model_open(tl_model** out, const char* ckpt_path);
tl_status tl_model_save(tl_model* m, const char* ckpt_path);
tl_status tl_model_spec(tl_model* m, char** json_out);
void tl_model_close(tl_model* m);

/* Symbolic parameter count; breakdown as JSON. */
tl_status tl_count_params(const char* spec_json, char** json_out);

/* -------------------------------------------------------------- training */

/* Runs a full training job from a run-config document; returns a summary
 * (checkpoint paths, final metrics) as JSON. */
tl_status tl_train(const char* run_config_json, char** summary_json_out);

/* Evaluates a checkpoint on a saved dataset; metrics as JSON. */
tl_status tl_eval(const char* ckpt_path, const char* data_path, long long batch,
                  char** metrics_json_out);

/* ---------------------------------------------------------- verification */

/* Gradient check for a named operator; returns the max relative error.
 * Operators: matmul, softmax, layernorm, cross_entropy, gelu, self_attention,
 * self_attention_causal, conv2d, translution2d, translution1d,
 * translution1d_causal, alpha, alpha_efficient, alpha_noshared,
 * absolute_pairs, rel_key, rel_value, rel_scalar, gated, rotary, vit_micro,
 * gpt_micro. */
tl_status tl_gradcheck(const char* op_name, double* out_max_rel_err);

/* Value-path peak-memory benchmark; variant "naive" | "efficient". */
tl_status tl_bench_mem(const char* variant, long long n, long long cprime, long long c2,
                       char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* TRANSLUTION_CAPI_H */
