#ifndef DEADTIME_H
#define DEADTIME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum DtStatus {
  DT_STATUS_OK = 0,
  DT_STATUS_NULL_POINTER = 1,
  DT_STATUS_INVALID_ARGUMENT = 2,
  DT_STATUS_INVALID_MODEL = 3,
  DT_STATUS_DEGENERATE_MODEL = 4,
  DT_STATUS_INSUFFICIENT_DATA = 5,
  DT_STATUS_CAPACITY = 6,
  DT_STATUS_UNSUPPORTED = 7,
  DT_STATUS_NOT_CONVERGED = 8,
  DT_STATUS_DEGENERATE_RESULT = 9,
  DT_STATUS_BUFFER_TOO_SMALL = 10,
  DT_STATUS_IO = 11,
  DT_STATUS_PANIC = 12,
} DtStatus;

/**
 * Which distribution a Fisher information refers to.
 */
typedef enum DtDistribution {
  DT_DISTRIBUTION_ARRIVAL = 0,
  DT_DISTRIBUTION_DETECTION = 1,
} DtDistribution;

/**
 * Ranging methods.
 */
typedef enum DtMethod {
  DT_METHOD_LF = 0,
  DT_METHOD_HF = 1,
  DT_METHOD_SC = 2,
  DT_METHOD_MCPDF = 3,
  DT_METHOD_MCHC = 4,
} DtMethod;

/**
 * Output of one histogram correction.
 */
typedef struct DtCorrection DtCorrection;

/**
 * Precomputed references for delay estimation on one scene.
 */
typedef struct DtEstimator DtEstimator;

/**
 * Scene parameters together with a bin grid.
 */
typedef struct DtScene DtScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dt_version(void);

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *dt_last_error(void);

/**
 * Creates a scene with bins of width `t_bin` ns.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DtStatus dt_scene_new(double t_r,
                           double t_d,
                           double sigma,
                           double signal,
                           double background,
                           double tau,
                           double t_bin,
                           struct DtScene **out);

/**
 * Releases a scene. Null is ignored.
 *
 * # Safety
 * `scene` must come from [`dt_scene_new`] and not be used afterwards.
 */
void dt_scene_free(struct DtScene *scene);

/**
 * Number of bins of the scene grid.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DtStatus dt_scene_n_bins(const struct DtScene *scene, size_t *out);

/**
 * Arrival pdf (1/ns) at the bin centers.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DtStatus dt_arrival_pdf(const struct DtScene *scene, double *out, size_t len);

/**
 * Stationary detection-time pdf (1/ns) at the bin centers.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DtStatus dt_detection_pdf(const struct DtScene *scene, double *out, size_t len);

/**
 * Fisher information about the delay per detection (1/ns²).
 *
 * # Safety
 * Pointers must be valid.
 */
enum DtStatus dt_fisher_information(const struct DtScene *scene,
                                    enum DtDistribution which,
                                    double delta_tau,
                                    double *out);

/**
 * Simulates `n_r` periods with dead time and bins the detections.
 *
 * # Safety
 * `counts` must point to `len` writable values; `detections` may be null.
 */
enum DtStatus dt_simulate_histogram(const struct DtScene *scene,
                                    uint64_t n_r,
                                    uint64_t seed,
                                    uint64_t *counts,
                                    size_t len,
                                    uint64_t *detections);

/**
 * Precomputes arrival and detection references for a scene.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DtStatus dt_estimator_new(const struct DtScene *scene, struct DtEstimator **out);

/**
 * Releases an estimator. Null is ignored.
 *
 * # Safety
 * `est` must come from [`dt_estimator_new`] and not be used afterwards.
 */
void dt_estimator_free(struct DtEstimator *est);

/**
 * Delay estimate in `[0, t_r)` from a histogram on the scene grid.
 *
 * # Safety
 * `counts` must point to `len` readable values and `tau_hat` to one double.
 */
enum DtStatus dt_estimate_delay(const struct DtEstimator *est,
                                enum DtMethod method,
                                const uint64_t *counts,
                                size_t len,
                                double *tau_hat);

/**
 * Recovers per-bin arrival intensities from a detection histogram.
 * `max_iter = 0` and `tol <= 0` select the defaults.
 *
 * # Safety
 * `hist` must point to `len` readable doubles; `out` to one handle slot.
 */
enum DtStatus dt_correction_solve(const double *hist,
                                  size_t len,
                                  size_t n_d,
                                  double flux,
                                  size_t max_iter,
                                  double tol,
                                  struct DtCorrection **out);

/**
 * Releases a correction result. Null is ignored.
 *
 * # Safety
 * `c` must come from [`dt_correction_solve`] and not be used afterwards.
 */
void dt_correction_free(struct DtCorrection *c);

/**
 * Number of bins in a correction result.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DtStatus dt_correction_len(const struct DtCorrection *c, size_t *out);

/**
 * Recovered per-bin expected arrivals.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DtStatus dt_correction_lambda(const struct DtCorrection *c, double *out, size_t len);

/**
 * Recovered intensities normalized to unit sum.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DtStatus dt_correction_histogram(const struct DtCorrection *c, double *out, size_t len);

/**
 * Iteration count, final objective and whether the tolerance was met.
 *
 * # Safety
 * Output pointers may be null; non-null ones must be writable.
 */
enum DtStatus dt_correction_stats(const struct DtCorrection *c,
                                  size_t *iterations,
                                  double *final_objective,
                                  bool *converged);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * fit) and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null with `len = 0`.
 */
size_t dt_last_error_copy(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEADTIME_H */
