#ifndef STRATLAB_H
#define STRATLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum StratlabStatus {
  STRATLAB_STATUS_OK = 0,
  STRATLAB_STATUS_NULL_POINTER = 1,
  STRATLAB_STATUS_INVALID_UTF8 = 2,
  STRATLAB_STATUS_CONFIG = 3,
  STRATLAB_STATUS_DOMAIN = 4,
  STRATLAB_STATUS_ARGUMENT = 5,
  STRATLAB_STATUS_PRECONDITION = 6,
  STRATLAB_STATUS_UNSUPPORTED = 7,
  STRATLAB_STATUS_RESOLUTION = 8,
  STRATLAB_STATUS_NUMERICAL = 9,
  STRATLAB_STATUS_INCONSISTENT_METRIC = 10,
  STRATLAB_STATUS_IO = 11,
  STRATLAB_STATUS_PANIC = 12,
} StratlabStatus;

/**
 * Opaque handle to a validated model.
 */
typedef struct StratlabModel StratlabModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *stratlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *stratlab_version(void);

/**
 * Builds a model from a JSON model document.
 *
 * # Safety
 * `json` must be null or a NUL-terminated string; `out` must be null or writable.
 */
enum StratlabStatus stratlab_model_from_json(const char *json, struct StratlabModel **out);

/**
 * Flat cone of total angle `alpha`, truncated at `truncation_radius`.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum StratlabStatus stratlab_model_flat_cone(double alpha,
                                             double truncation_radius,
                                             struct StratlabModel **out);

/**
 * `n`-dimensional spherical suspension whose codimension-two angle is `alpha`.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum StratlabStatus stratlab_model_spherical_suspension(size_t n,
                                                        double alpha,
                                                        struct StratlabModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void stratlab_model_free(struct StratlabModel *model);

/**
 * Topological dimension of the model.
 *
 * # Safety
 * `model` must be a live handle or null; `out` must be null or writable.
 */
enum StratlabStatus stratlab_model_dim(const struct StratlabModel *model, size_t *out);

/**
 * The model document as JSON; free with [`stratlab_string_free`].
 *
 * # Safety
 * `model` must be a live handle or null; `out` must be null or writable.
 */
enum StratlabStatus stratlab_model_to_json(const struct StratlabModel *model, char **out);

/**
 * Distance between two points given as `"apex"`, `"pole"` or center JSON.
 *
 * # Safety
 * Pointers must be null or valid as documented on the module.
 */
enum StratlabStatus stratlab_distance(const struct StratlabModel *model,
                                      const char *p,
                                      const char *q,
                                      double *out);

/**
 * RCD(K, N) verdict flags.
 *
 * # Safety
 * Pointers must be null or valid as documented on the module.
 */
enum StratlabStatus stratlab_classify(const struct StratlabModel *model,
                                      double k,
                                      double n,
                                      bool *is_rcd,
                                      bool *indeterminate);

/**
 * Full RCD(K, N) verdict with reasons, as JSON.
 *
 * # Safety
 * Pointers must be null or valid as documented on the module.
 */
enum StratlabStatus stratlab_classify_json(const struct StratlabModel *model,
                                           double k,
                                           double n,
                                           char **out);

/**
 * Monte Carlo volume of `B(center, radius)` with its standard error.
 *
 * # Safety
 * Pointers must be null or valid as documented on the module.
 */
enum StratlabStatus stratlab_ball_volume(const struct StratlabModel *model,
                                         const char *center,
                                         double radius,
                                         uint64_t samples,
                                         uint64_t seed,
                                         double *value,
                                         double *stderr);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void stratlab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STRATLAB_H */
