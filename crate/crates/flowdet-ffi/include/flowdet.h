#ifndef FLOWDET_H
#define FLOWDET_H

/* Generated by cbindgen from flowdet-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call.
 */
typedef enum FdStatus {
  FD_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FD_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument value was rejected (bad dimensions, bad path encoding).
   */
  FD_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The checkpoint file could not be read.
   */
  FD_STATUS_IO = 3,
  /**
   * The checkpoint file is not a valid checkpoint.
   */
  FD_STATUS_CORRUPT_CHECKPOINT = 4,
  /**
   * The checkpoint format version is unsupported.
   */
  FD_STATUS_VERSION_MISMATCH = 5,
  /**
   * Window dimensions do not match the model.
   */
  FD_STATUS_SHAPE_MISMATCH = 6,
  /**
   * Internal failure (a panic was caught).
   */
  FD_STATUS_INTERNAL = 7,
} FdStatus;

/**
 * Loaded model + encoder + threshold. Opaque to C callers.
 */
typedef struct FdDetector FdDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a checkpoint JSON file into a new detector handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to receive the handle. On success the caller owns the handle and
 * must release it with [`fd_detector_free`].
 */
enum FdStatus fd_detector_load(const char *path, struct FdDetector **out);

/**
 * Release a handle returned by [`fd_detector_load`]. Null is a no-op.
 *
 * # Safety
 * `detector` must be a handle from [`fd_detector_load`] that has not been
 * freed already.
 */
void fd_detector_free(struct FdDetector *detector);

/**
 * Window length (time steps) the model expects; 0 if `detector` is null.
 *
 * # Safety
 * `detector` must be null or a live handle.
 */
size_t fd_detector_window_len(const struct FdDetector *detector);

/**
 * Feature count per time step the model expects; 0 if `detector` is null.
 *
 * # Safety
 * `detector` must be null or a live handle.
 */
size_t fd_detector_feature_count(const struct FdDetector *detector);

/**
 * Decision threshold stored in the checkpoint; NaN if `detector` is null.
 *
 * # Safety
 * `detector` must be null or a live handle.
 */
double fd_detector_threshold(const struct FdDetector *detector);

/**
 * Score one raw window. `features` holds `window_len * feature_count`
 * doubles, row-major, oldest time step first, raw (un-normalized) values.
 * Writes the malicious-probability into `out_score`.
 *
 * # Safety
 * `features` must point to `window_len * feature_count` readable doubles
 * and `out_score` to a writable double; `detector` must be a live handle.
 */
enum FdStatus fd_detector_score(const struct FdDetector *detector,
                                const double *features,
                                size_t window_len,
                                size_t feature_count,
                                double *out_score);

/**
 * Score `window_count` raw windows laid out back to back; one score is
 * written per window.
 *
 * # Safety
 * `features` must point to `window_count * window_len * feature_count`
 * readable doubles and `out_scores` to `window_count` writable doubles;
 * `detector` must be a live handle.
 */
enum FdStatus fd_detector_score_batch(const struct FdDetector *detector,
                                      const double *features,
                                      size_t window_count,
                                      size_t window_len,
                                      size_t feature_count,
                                      double *out_scores);

/**
 * Score one raw window and also apply the checkpoint threshold:
 * `out_label` receives 1 (malicious) iff score >= threshold.
 *
 * # Safety
 * Same requirements as [`fd_detector_score`], plus `out_label` must be a
 * writable int.
 */
enum FdStatus fd_detector_classify(const struct FdDetector *detector,
                                   const double *features,
                                   size_t window_len,
                                   size_t feature_count,
                                   double *out_score,
                                   int32_t *out_label);

/**
 * Take the last error message for this thread, or null if none. The caller
 * owns the returned string and must free it with [`fd_string_free`].
 */
char *fd_last_error_message(void);

/**
 * Free a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be a pointer returned by [`fd_last_error_message`] that has not
 * been freed already.
 */
void fd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWDET_H */
