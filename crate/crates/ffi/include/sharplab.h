#ifndef SHARPLAB_H
#define SHARPLAB_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ShlbStatus {
  SHLB_STATUS_OK = 0,
  SHLB_STATUS_IO = 1,
  SHLB_STATUS_CONFIG = 2,
  SHLB_STATUS_NOT_FOUND = 3,
  SHLB_STATUS_NUMERIC = 4,
  SHLB_STATUS_CORRUPT = 5,
  SHLB_STATUS_VERSION = 6,
  SHLB_STATUS_STRUCTURE = 7,
  SHLB_STATUS_DOMAIN = 8,
  SHLB_STATUS_INPUT = 9,
  SHLB_STATUS_NULL_POINTER = 10,
  SHLB_STATUS_PANIC = 11,
} ShlbStatus;

/**
 * Opaque model handle.
 */
typedef struct ShlbModel ShlbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *shlb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *shlb_version(void);

/**
 * Fresh model from a JSON model config (`layers`, `heads`, `hidden_dim`,
 * `vocab_size`, `context_len`, `seed`).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ShlbStatus shlb_model_init(const char *config_json, struct ShlbModel **out);

/**
 * Load the weights of a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ShlbStatus shlb_model_load(const char *path, struct ShlbModel **out);

/**
 * Save weights without optimizer state, as f32 when `single_precision` is nonzero.
 *
 * # Safety
 * `model` must come from this library and `path` be a NUL-terminated string.
 */
enum ShlbStatus shlb_model_save(const struct ShlbModel *model,
                                const char *path,
                                int32_t single_precision);

/**
 * Release a handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void shlb_model_free(struct ShlbModel *model);

/**
 * Number of scalar parameters, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
size_t shlb_model_param_count(const struct ShlbModel *model);

/**
 * Copy the flat parameters into `buf`, which must hold exactly `len` values.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum ShlbStatus shlb_model_copy_params(const struct ShlbModel *model, double *buf, size_t len);

/**
 * Replace the flat parameters.
 *
 * # Safety
 * `values` must point to `len` readable doubles.
 */
enum ShlbStatus shlb_model_set_params(struct ShlbModel *model, const double *values, size_t len);

/**
 * Mean next-token loss over the first `max_batches` batches of a corpus
 * given as JSON.
 *
 * # Safety
 * Pointers must be valid; `corpus_json` NUL-terminated.
 */
enum ShlbStatus shlb_model_eval_loss(const struct ShlbModel *model,
                                     const char *corpus_json,
                                     size_t batch_size,
                                     size_t seq_len,
                                     size_t max_batches,
                                     double *out_loss);

/**
 * Blockwise quantised copy; `bits` is 4 (NF4) or 8 (int8).
 *
 * # Safety
 * Pointers must be valid.
 */
enum ShlbStatus shlb_model_quantize(const struct ShlbModel *model,
                                    uint32_t bits,
                                    size_t block_size,
                                    struct ShlbModel **out);

/**
 * Copy with per-tensor Gaussian noise of relative Frobenius size `gamma`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ShlbStatus shlb_model_perturb(const struct ShlbModel *model,
                                   double gamma,
                                   uint64_t seed,
                                   struct ShlbModel **out);

/**
 * Curvature of the loss along `direction`, averaged over eval batches.
 *
 * # Safety
 * `direction` must point to `len` doubles; other pointers valid.
 */
enum ShlbStatus shlb_directional_sharpness(const struct ShlbModel *model,
                                           const double *direction,
                                           size_t len,
                                           const char *corpus_json,
                                           size_t batch_size,
                                           size_t seq_len,
                                           size_t max_batches,
                                           double *out_kappa);

/**
 * Learning rate at step `t` of a schedule given as JSON.
 *
 * # Safety
 * Pointers must be valid; `schedule_json` NUL-terminated.
 */
enum ShlbStatus shlb_lr_at(const char *schedule_json, uint64_t t, double *out_lr);

/**
 * Mark the Pareto-optimal points of `(l_ft[i], l_pt[i])`, both minimised:
 * `out_mask[i]` is 1 on the frontier and 0 otherwise.
 *
 * # Safety
 * All three arrays must hold `n` elements.
 */
enum ShlbStatus shlb_pareto_mask(const double *l_ft,
                                 const double *l_pt,
                                 size_t n,
                                 uint8_t *out_mask);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHARPLAB_H */
