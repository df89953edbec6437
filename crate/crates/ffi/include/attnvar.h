#ifndef ATTNVAR_H
#define ATTNVAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AttnvarStatus {
  ATTNVAR_STATUS_OK = 0,
  ATTNVAR_STATUS_NULL_ARGUMENT = 1,
  ATTNVAR_STATUS_INVALID_UTF8 = 2,
  ATTNVAR_STATUS_IO = 3,
  ATTNVAR_STATUS_CHECKPOINT = 4,
  ATTNVAR_STATUS_INVALID_INPUT = 5,
  ATTNVAR_STATUS_DEGENERATE_GATE = 6,
  ATTNVAR_STATUS_PANIC = 7,
} AttnvarStatus;

/**
 * Loaded checkpoint. Opaque to C.
 */
typedef struct AttnvarModel AttnvarModel;

typedef struct AttnvarRouge {
  double precision;
  double recall;
  double f1;
} AttnvarRouge;

typedef struct AttnvarLoss {
  double mle;
  double local;
  double global;
  double total;
} AttnvarLoss;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on this thread.
 */
const char *attnvar_last_error(void);

/**
 * Loads a checkpoint file into a new model handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AttnvarStatus attnvar_model_load(const char *path, struct AttnvarModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`attnvar_model_load`] and not be freed twice.
 */
void attnvar_model_free(struct AttnvarModel *model);

/**
 * Vocabulary size of the model, reserved ids included.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum AttnvarStatus attnvar_model_vocab_size(const struct AttnvarModel *model, size_t *out);

/**
 * Beam-decodes a space-separated source. The summary is written to `*out`
 * as a new string that must be released with [`attnvar_string_free`].
 *
 * # Safety
 * `model` must be a live handle, `source` a NUL-terminated string and
 * `out` a valid pointer.
 */
enum AttnvarStatus attnvar_model_decode(const struct AttnvarModel *model,
                                        const char *source,
                                        size_t beam_size,
                                        size_t max_len,
                                        bool block_trigrams,
                                        char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void attnvar_string_free(char *s);

/**
 * ROUGE between two space-separated token strings; `n = 0` selects
 * ROUGE-L, otherwise ROUGE-N.
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` a valid pointer.
 */
enum AttnvarStatus attnvar_rouge(const char *candidate,
                                 const char *reference,
                                 size_t n,
                                 struct AttnvarRouge *out);

/**
 * Fraction of repeated n-gram occurrences in a space-separated string.
 *
 * # Safety
 * `tokens` must be NUL-terminated and `out` a valid pointer.
 */
enum AttnvarStatus attnvar_duplication_rate(const char *tokens, size_t n, double *out);

/**
 * Mixed training loss from a row-major `steps x source_len` matrix of
 * refined attention and the `steps` gold-token probabilities.
 *
 * # Safety
 * `refined` must point to `steps * source_len` values, `gold_probs` to
 * `steps` values, and `out` must be valid.
 */
enum AttnvarStatus attnvar_mixed_loss(const double *refined,
                                      size_t steps,
                                      size_t source_len,
                                      const double *gold_probs,
                                      double lambda_local,
                                      double lambda_global,
                                      double epsilon,
                                      struct AttnvarLoss *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTNVAR_H */
