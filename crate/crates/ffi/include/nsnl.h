#ifndef NSNL_H
#define NSNL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NsnlStatus {
  NSNL_STATUS_OK = 0,
  NSNL_STATUS_NULL_POINTER = 1,
  NSNL_STATUS_INVALID_ARGUMENT = 2,
  NSNL_STATUS_GUARD_TRIPPED = 3,
  NSNL_STATUS_NUMERICAL = 4,
  NSNL_STATUS_IO = 5,
  NSNL_STATUS_FORMAT = 6,
  NSNL_STATUS_PANIC = 7,
} NsnlStatus;

/**
 * Opaque simulation handle.
 */
typedef struct NsnlSim NsnlSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *nsnl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nsnl_version(void);

/**
 * Creates a 1D Gaussian simulation with `M = mass_ratio·μ`, μ = ħ = 1
 * (`mass_ratio = 0` selects linear evolution with M = 1). A non-positive
 * `nl_cutoff` disables the band limit on the nonlinear rate.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum NsnlStatus nsnl_sim_new_gaussian(size_t n,
                                      double length,
                                      double sigma,
                                      double x0,
                                      double k0,
                                      double mass_ratio,
                                      double dt,
                                      double nl_cutoff,
                                      struct NsnlSim **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from [`nsnl_sim_new_gaussian`] and not be used afterwards.
 */
void nsnl_sim_free(struct NsnlSim *sim);

/**
 * Advances `steps` strang steps. On a guard trip the state is left at the
 * last completed step.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum NsnlStatus nsnl_sim_step(struct NsnlSim *sim, size_t steps);

/**
 * # Safety
 * `sim` must be a live handle and `out` valid for one write.
 */
enum NsnlStatus nsnl_sim_time(const struct NsnlSim *sim, double *out);

/**
 * Number of grid points.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for one write.
 */
enum NsnlStatus nsnl_sim_len(const struct NsnlSim *sim, size_t *out);

/**
 * Norm, mean position and width of the current state.
 *
 * # Safety
 * `sim` must be a live handle; each output pointer valid for one write.
 */
enum NsnlStatus nsnl_sim_observables(const struct NsnlSim *sim,
                                     double *norm,
                                     double *mean_x,
                                     double *width);

/**
 * Copies the field into caller buffers of `len` entries each.
 *
 * # Safety
 * `re` and `im` must be valid for `len` writes.
 */
enum NsnlStatus nsnl_sim_copy_state(const struct NsnlSim *sim, double *re, double *im, size_t len);

/**
 * Normalized non-signaling residual of the current state.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for one write.
 */
enum NsnlStatus nsnl_sim_nonsignaling_residual(const struct NsnlSim *sim, double *out);

/**
 * Writes the current state as a binary snapshot file.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum NsnlStatus nsnl_sim_write_snapshot(const struct NsnlSim *sim, const char *path);

/**
 * Replaces the state with one read from a snapshot file on the same grid.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum NsnlStatus nsnl_sim_read_snapshot(struct NsnlSim *sim, const char *path);

/**
 * Width σ(t) of a Gaussian at rest from the moment equations, with
 * `M = mass_ratio·μ` and μ = ħ = 1.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum NsnlStatus nsnl_moment_sigma(double sigma0, double mass_ratio, double t, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NSNL_H */
