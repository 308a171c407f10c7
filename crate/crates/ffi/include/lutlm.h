#ifndef LUTLM_H
#define LUTLM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LutlmStatus {
  LUTLM_STATUS_OK = 0,
  LUTLM_STATUS_NULL_ARGUMENT = 1,
  LUTLM_STATUS_INVALID_UTF8 = 2,
  LUTLM_STATUS_IO = 3,
  LUTLM_STATUS_FORMAT = 4,
  LUTLM_STATUS_INVALID_INPUT = 5,
  LUTLM_STATUS_NUMERIC = 6,
  LUTLM_STATUS_BUFFER_TOO_SMALL = 7,
  LUTLM_STATUS_PANIC = 8,
} LutlmStatus;

/**
 * Opaque handle to a loaded checkpoint.
 */
typedef struct LutlmModel LutlmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *lutlm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lutlm_version(void);

/**
 * Loads a checkpoint. On success `*out` owns a handle to release with
 * [`lutlm_model_free`]. A checksum mismatch still loads; see
 * [`lutlm_model_checksum_ok`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LutlmStatus lutlm_model_open(const char *path, struct LutlmModel **out);

/**
 * Releases a handle from [`lutlm_model_open`]. Null is ignored.
 *
 * # Safety
 * `model` must come from `lutlm_model_open` and not be used afterwards.
 */
void lutlm_model_free(struct LutlmModel *model);

/**
 * Writes `(vocabulary size, hidden width, latent categories)`; the last is
 * 0 for variants without latent categories. Any output may be null.
 *
 * # Safety
 * `model` must be a live handle; non-null outputs must be valid.
 */
enum LutlmStatus lutlm_model_dims(const struct LutlmModel *model,
                                  size_t *vocab,
                                  size_t *hidden,
                                  size_t *latent);

/**
 * 1 if the stored whole-file checksum matched on load, else 0.
 *
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
int32_t lutlm_model_checksum_ok(const struct LutlmModel *model);

/**
 * Category distribution (`latent` values) and `[CLS]` vector (`hidden`
 * values) for a text. For variants without latent categories pass a
 * distribution length of 0; the pointer may then be null.
 *
 * # Safety
 * `text` must be NUL-terminated; buffers must hold at least the given
 * number of floats.
 */
enum LutlmStatus lutlm_model_features(const struct LutlmModel *model,
                                      const char *text,
                                      float *distribution,
                                      size_t distribution_len,
                                      float *classification,
                                      size_t classification_len);

/**
 * Category distribution for a multiset of token ids.
 *
 * # Safety
 * `ids` must point to `count` values (or be null with `count` 0); `out`
 * must hold `out_len` floats.
 */
enum LutlmStatus lutlm_latent_distribution(const struct LutlmModel *model,
                                           const uint32_t *ids,
                                           size_t count,
                                           float *out,
                                           size_t out_len);

/**
 * Parameter counts for a configuration in the `key = value` format used by
 * `lutlm train`; `vocab` must be set. `reported` excludes the pretraining heads.
 *
 * # Safety
 * `config_text` must be NUL-terminated; outputs must be valid or null.
 */
enum LutlmStatus lutlm_count_parameters(const char *config_text,
                                        uint64_t *reported,
                                        uint64_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LUTLM_H */
