#ifndef SPMLAB_H
#define SPMLAB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which function of the nonlinearity to evaluate.
 */
typedef enum SpmNonlinearityFn {
  /**
   * `A(r)`.
   */
  SPM_NONLINEARITY_FN_A = 0,
  /**
   * `A'(r)`.
   */
  SPM_NONLINEARITY_FN_DERIVATIVE_A = 1,
  /**
   * `𝔞(r) = √A'(r)`.
   */
  SPM_NONLINEARITY_FN_SQRT_DIFFUSIVITY = 2,
  /**
   * `Ψ(r) = ∫_0^r 𝔞`.
   */
  SPM_NONLINEARITY_FN_PSI = 3,
} SpmNonlinearityFn;

/**
 * Status codes returned by every fallible function.
 */
typedef enum SpmStatus {
  SPM_STATUS_OK = 0,
  SPM_STATUS_NULL_POINTER = 1,
  SPM_STATUS_INVALID_UTF8 = 2,
  SPM_STATUS_INVALID_PARAMETER = 3,
  SPM_STATUS_CONFIG = 4,
  SPM_STATUS_VALIDATION = 5,
  SPM_STATUS_NUMERICAL = 6,
  SPM_STATUS_IO = 7,
  SPM_STATUS_OUT_OF_RANGE = 8,
  SPM_STATUS_BUFFER_TOO_SMALL = 9,
  SPM_STATUS_PANIC = 10,
} SpmStatus;

/**
 * Nonlinearity `A`, raw or regularized.
 */
typedef struct SpmNonlinearity SpmNonlinearity;

/**
 * A validated run configuration with its assembled problem.
 */
typedef struct SpmSetup SpmSetup;

/**
 * Saved states of one run.
 */
typedef struct SpmTrajectory SpmTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *spm_last_error_message(void);

/**
 * Static, NUL-terminated library version.
 */
const char *spm_version(void);

/**
 * `A(r) = |r|^{m-1} r`.
 *
 * # Safety
 * `out_nl` must be a valid pointer to writable storage for a handle.
 */
enum SpmStatus spm_nonlinearity_power_law(double m, double k, struct SpmNonlinearity **out_nl);

/**
 * Regularization `A_n` of `nl`; the input handle is left untouched.
 *
 * # Safety
 * `nl` must be a live handle and `out_nl` a valid pointer.
 */
enum SpmStatus spm_nonlinearity_regularize(const struct SpmNonlinearity *nl,
                                           uint32_t n,
                                           struct SpmNonlinearity **out_nl);

/**
 * Evaluates `which` at `r`.
 *
 * # Safety
 * `nl` must be a live handle and `out_value` a valid pointer.
 */
enum SpmStatus spm_nonlinearity_eval(const struct SpmNonlinearity *nl,
                                     enum SpmNonlinearityFn which,
                                     double r,
                                     double *out_value);

/**
 * # Safety
 * `nl` must be NULL or a handle not yet freed.
 */
void spm_nonlinearity_free(struct SpmNonlinearity *nl);

/**
 * Parses, validates and assembles a run configuration given as TOML.
 * Relative paths inside it resolve against `base_dir` (may be NULL for
 * the current directory).
 *
 * # Safety
 * `toml` must be a NUL-terminated string, `base_dir` NULL or one, and
 * `out_setup` a valid pointer.
 */
enum SpmStatus spm_setup_from_toml(const char *toml,
                                   const char *base_dir,
                                   struct SpmSetup **out_setup);

/**
 * Copies the hex config hash (64 characters plus NUL) into `buf`.
 *
 * # Safety
 * `setup` must be a live handle and `buf` writable for `len` bytes.
 */
enum SpmStatus spm_setup_config_hash(const struct SpmSetup *setup, char *buf, size_t len);

/**
 * Number of ensemble members of the configuration.
 *
 * # Safety
 * `setup` must be a live handle and `out_count` a valid pointer.
 */
enum SpmStatus spm_setup_seed_count(const struct SpmSetup *setup, size_t *out_count);

/**
 * Seed of ensemble member `index`.
 *
 * # Safety
 * `setup` must be a live handle and `out_seed` a valid pointer.
 */
enum SpmStatus spm_setup_seed(const struct SpmSetup *setup, size_t index, uint64_t *out_seed);

/**
 * # Safety
 * `setup` must be NULL or a handle not yet freed.
 */
void spm_setup_free(struct SpmSetup *setup);

/**
 * Runs the member driven by `seed`.
 *
 * # Safety
 * `setup` must be a live handle and `out_traj` a valid pointer.
 */
enum SpmStatus spm_setup_run(const struct SpmSetup *setup,
                             uint64_t seed,
                             struct SpmTrajectory **out_traj);

/**
 * Number of saved states.
 *
 * # Safety
 * `traj` must be a live handle and `out_count` a valid pointer.
 */
enum SpmStatus spm_trajectory_save_count(const struct SpmTrajectory *traj, size_t *out_count);

/**
 * Number of lattice points per saved state.
 *
 * # Safety
 * `traj` must be a live handle and `out_len` a valid pointer.
 */
enum SpmStatus spm_trajectory_field_len(const struct SpmTrajectory *traj, size_t *out_len);

/**
 * Time and values of saved state `index`; `values` receives
 * `spm_trajectory_field_len` doubles.
 *
 * # Safety
 * `traj` must be a live handle, `out_time` a valid pointer and `values`
 * writable for `len` doubles.
 */
enum SpmStatus spm_trajectory_field(const struct SpmTrajectory *traj,
                                    size_t index,
                                    double *out_time,
                                    double *values,
                                    size_t len);

/**
 * Writes the norm time series as CSV to `path`.
 *
 * # Safety
 * `traj` must be a live handle and `path` a NUL-terminated string.
 */
enum SpmStatus spm_trajectory_write_csv(const struct SpmTrajectory *traj, const char *path);

/**
 * # Safety
 * `traj` must be NULL or a handle not yet freed.
 */
void spm_trajectory_free(struct SpmTrajectory *traj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPMLAB_H */
