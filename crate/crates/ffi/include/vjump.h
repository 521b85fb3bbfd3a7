#ifndef VJUMP_H
#define VJUMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Length of the vector written by [`vjump_extract_features`].
 */
#define VJUMP_FEATURE_DIM 145

/**
 * Channels per sample in every sample buffer.
 */
#define VJUMP_CHANNELS 6

/**
 * Result of every fallible call.
 */
typedef enum VjumpStatus {
  VJUMP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  VJUMP_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or inconsistent with the model.
   */
  VJUMP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The file could not be read.
   */
  VJUMP_STATUS_IO = 3,
  /**
   * The file was read but is not a valid checkpoint of the expected kind.
   */
  VJUMP_STATUS_FORMAT = 4,
  /**
   * A Rust panic was caught at the boundary; the handle is still valid.
   */
  VJUMP_STATUS_INTERNAL = 5,
} VjumpStatus;

/**
 * A trained height regressor.
 */
typedef struct VjumpRegressor VjumpRegressor;

/**
 * A trained segmentation network.
 */
typedef struct VjumpTcn VjumpTcn;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vjump_version(void);

/**
 * Message describing the last failed call on this thread, or an empty
 * string after a successful one. The pointer stays valid until the next
 * call into this library on the same thread.
 */
const char *vjump_last_error_message(void);

/**
 * Loads a segmentation checkpoint. On success `*out` receives a handle to
 * release with [`vjump_tcn_free`]; on failure it is set to null.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VjumpStatus vjump_tcn_load(const char *path, struct VjumpTcn **out);

/**
 * Releases a handle from [`vjump_tcn_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void vjump_tcn_free(struct VjumpTcn *model);

/**
 * Number of classes the network predicts, background included; 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vjump_tcn_num_classes(const struct VjumpTcn *model);

/**
 * Labels every sample of a session. `samples` holds `n_samples × 6`
 * values; `labels` receives `n_samples` class ids.
 *
 * # Safety
 * `samples` must point to `n_samples * 6` readable values and `labels` to
 * `n_samples` writable ones.
 */
enum VjumpStatus vjump_tcn_predict(const struct VjumpTcn *model,
                                   const double *samples,
                                   size_t n_samples,
                                   uint32_t *labels);

/**
 * Computes the [`VJUMP_FEATURE_DIM`]-value feature vector of one ROI
 * window of `n_samples × 6` values. `class_id` indexes the default class
 * list (0 background, 1 CMJ, 2 Smash, 3 Block, 4 OS, 5 Squat, 6 Dive,
 * 7 Hop) and must be a height-eligible class (1–4).
 *
 * # Safety
 * `window` must point to `n_samples * 6` readable values and `features`
 * to `features_len` writable ones.
 */
enum VjumpStatus vjump_extract_features(const double *window,
                                        size_t n_samples,
                                        uint32_t class_id,
                                        double *features,
                                        size_t features_len);

/**
 * Loads a regressor checkpoint. On success `*out` receives a handle to
 * release with [`vjump_regressor_free`]; on failure it is set to null.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VjumpStatus vjump_regressor_load(const char *path, struct VjumpRegressor **out);

/**
 * Releases a handle from [`vjump_regressor_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void vjump_regressor_free(struct VjumpRegressor *model);

/**
 * Number of features the regressor expects; 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vjump_regressor_input_dim(const struct VjumpRegressor *model);

/**
 * Predicts jump heights in meters for `n_rows` feature rows stored
 * row-major with `n_features` values each.
 *
 * # Safety
 * `features` must point to `n_rows * n_features` readable values and
 * `heights` to `n_rows` writable ones.
 */
enum VjumpStatus vjump_regressor_predict(const struct VjumpRegressor *model,
                                         const double *features,
                                         size_t n_rows,
                                         size_t n_features,
                                         double *heights);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VJUMP_H */
