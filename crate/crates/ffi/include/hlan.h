/* Generated by cbindgen from crates/ffi/src/lib.rs. */

#ifndef HLAN_H
#define HLAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HlanStatus {
  HLAN_STATUS_OK = 0,
  HLAN_STATUS_NULL_POINTER = 1,
  HLAN_STATUS_INVALID_UTF8 = 2,
  HLAN_STATUS_INVALID_ARGUMENT = 3,
  HLAN_STATUS_IO = 4,
  HLAN_STATUS_FORMAT = 5,
  HLAN_STATUS_MISMATCH = 6,
  HLAN_STATUS_NUMERIC = 7,
  HLAN_STATUS_BUFFER_SIZE = 8,
  HLAN_STATUS_PANIC = 9,
} HlanStatus;

/**
 * A loaded checkpoint with its vocabulary. Opaque to C callers.
 */
typedef struct HlanModel HlanModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint. `vocab_path` may be null, in which case `vocab.tsv`
 * next to the checkpoint is used. On success `*out` owns a model that must
 * be released with [`hlan_model_free`].
 *
 * # Safety
 * Path arguments must be null or NUL-terminated strings; `out` must be a
 * valid pointer.
 */
enum HlanStatus hlan_model_load(const char *checkpoint_path,
                                const char *vocab_path,
                                struct HlanModel **out);

/**
 * # Safety
 * `model` must be null or a pointer from [`hlan_model_load`] not yet freed.
 */
void hlan_model_free(struct HlanModel *model);

/**
 * # Safety
 * `model` must come from [`hlan_model_load`]; `out` must be valid.
 */
enum HlanStatus hlan_model_num_labels(const struct HlanModel *model, size_t *out);

/**
 * Name of label `index` as a new string.
 *
 * # Safety
 * `model` must come from [`hlan_model_load`]; `out` must be valid.
 */
enum HlanStatus hlan_model_label(const struct HlanModel *model, size_t index, char **out);

/**
 * Writes one probability per label, in label order, into `probabilities`,
 * which must hold exactly as many entries as the model has labels.
 *
 * # Safety
 * `model` must come from [`hlan_model_load`]; `text` must be a
 * NUL-terminated string; `probabilities` must point to `len` doubles.
 */
enum HlanStatus hlan_predict(const struct HlanModel *model,
                             const char *text,
                             double *probabilities,
                             size_t len);

/**
 * Prediction and highlights for every label whose probability exceeds
 * `threshold`, as a JSON object with `doc_id`, `probabilities`, `predicted`
 * and `highlights`. Highlight thresholds are the library defaults.
 *
 * # Safety
 * `model` must come from [`hlan_model_load`]; `doc_id` and `text` must be
 * NUL-terminated strings; `out_json` must be valid.
 */
enum HlanStatus hlan_explain_json(const struct HlanModel *model,
                                  const char *doc_id,
                                  const char *text,
                                  double threshold,
                                  char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void hlan_string_free(char *s);

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next call into the library on the same thread.
 */
const char *hlan_last_error(void);

/**
 * Library version as a static string.
 */
const char *hlan_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HLAN_H */
