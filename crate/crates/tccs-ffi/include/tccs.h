#ifndef TCCS_H
#define TCCS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Matches the CLI exit codes.
 */
typedef enum TccsStatus {
  TccsStatus_Ok = 0,
  /**
   * A required pointer was null or a handle was unusable.
   */
  TccsStatus_NullArgument = 1,
  /**
   * An argument was outside its documented domain.
   */
  TccsStatus_Parameter = 2,
  /**
   * File trouble or malformed on-disk data.
   */
  TccsStatus_Io = 3,
  /**
   * The computation failed numerically (divergence, bad values).
   */
  TccsStatus_Numerical = 4,
} TccsStatus;

/**
 * Opaque sampling-plan handle carrying the observed coordinates and values.
 */
typedef struct TccsPlan TccsPlan;

/**
 * Opaque third-order tensor handle.
 */
typedef struct TccsTensor TccsTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread; empty if no
 * call has failed yet. Valid until the next failing call on this thread.
 */
const char *tccs_last_error_message(void);

/**
 * Builds an n1 x n2 x n3 tensor from `len` = n1*n2*n3 values laid out as
 * documented in the crate header. The buffer is copied.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be writable.
 */
enum TccsStatus tccs_tensor_create(uintptr_t n1,
                                   uintptr_t n2,
                                   uintptr_t n3,
                                   const double *values,
                                   uintptr_t len,
                                   struct TccsTensor **out);

/**
 * Draws a random tensor of the requested tubal rank from two Gaussian
 * factor tensors. Identical seeds give identical tensors.
 *
 * # Safety
 * `out` must be writable.
 */
enum TccsStatus tccs_gen_lowrank(uintptr_t n1,
                                 uintptr_t n2,
                                 uintptr_t n3,
                                 uintptr_t rank,
                                 uint64_t seed,
                                 struct TccsTensor **out);

/**
 * Frees a tensor handle. Null is a no-op.
 *
 * # Safety
 * `t` must be null or a handle this library returned, not yet freed.
 */
void tccs_tensor_free(struct TccsTensor *t);

/**
 * Writes the three dimensions.
 *
 * # Safety
 * All pointers must be valid.
 */
enum TccsStatus tccs_tensor_dims(const struct TccsTensor *t,
                                 uintptr_t *n1,
                                 uintptr_t *n2,
                                 uintptr_t *n3);

/**
 * Reads one entry, bounds-checked.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum TccsStatus tccs_tensor_get(const struct TccsTensor *t,
                                uintptr_t i,
                                uintptr_t j,
                                uintptr_t k,
                                double *out);

/**
 * Copies all entries into `out`, which must hold exactly `len` = n1*n2*n3
 * doubles; the layout matches [`tccs_tensor_create`].
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum TccsStatus tccs_tensor_copy_values(const struct TccsTensor *t, double *out, uintptr_t len);

/**
 * Reads a tensor file (binary format, bit-exact round trips).
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum TccsStatus tccs_tensor_read(const char *path, struct TccsTensor **out);

/**
 * Writes a tensor file.
 *
 * # Safety
 * `path` must be NUL-terminated; `t` must be a live handle.
 */
enum TccsStatus tccs_tensor_write(const char *path, const struct TccsTensor *t);

/**
 * Draws a cross-concentrated sampling plan over `t`: `size_i` horizontal
 * and `size_j` lateral slices chosen uniformly without replacement, then
 * Bernoulli masks at rates `p_r` / `p_c` on the two slabs. The observed
 * values of `t` are recorded in the plan.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum TccsStatus tccs_plan_sample(const struct TccsTensor *t,
                                 uintptr_t size_i,
                                 uintptr_t size_j,
                                 double p_r,
                                 double p_c,
                                 uint64_t seed,
                                 struct TccsPlan **out);

/**
 * Frees a plan handle. Null is a no-op.
 *
 * # Safety
 * `p` must be null or a handle this library returned, not yet freed.
 */
void tccs_plan_free(struct TccsPlan *p);

/**
 * Fraction of tensor entries the plan observes (duplicates counted once).
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum TccsStatus tccs_plan_overall_rate(const struct TccsPlan *p, double *out);

/**
 * Reads a plan file (text format).
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum TccsStatus tccs_plan_read(const char *path, struct TccsPlan **out);

/**
 * Writes a plan file.
 *
 * # Safety
 * `path` must be NUL-terminated; `p` must be a live handle.
 */
enum TccsStatus tccs_plan_write(const char *path, const struct TccsPlan *p);

/**
 * Completes the plan's tensor with the iterative cross solver and returns
 * the dense reconstruction. Step sizes `eta_r`, `eta_c`, `eta_u` of 0 or
 * below select the library defaults (inverse sampling rates). `iterations`,
 * `residual`, and `converged` may be null if not wanted.
 *
 * # Safety
 * `p` must be a live handle; non-null outputs must be writable.
 */
enum TccsStatus tccs_itcurtc_complete(const struct TccsPlan *p,
                                      uintptr_t rank,
                                      double tol,
                                      uintptr_t max_iter,
                                      double eta_r,
                                      double eta_c,
                                      double eta_u,
                                      struct TccsTensor **out,
                                      uintptr_t *iterations,
                                      double *residual,
                                      int *converged);

/**
 * Completes the plan's tensor with the two-stage slab solver. A `sub_eta`
 * of 0 or below selects the default step (inverse slab rate).
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum TccsStatus tccs_tstc_complete(const struct TccsPlan *p,
                                   uintptr_t rank,
                                   double sub_eta,
                                   double tol,
                                   uintptr_t max_iter,
                                   struct TccsTensor **out);

/**
 * Frobenius relative error of `estimate` against `truth`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum TccsStatus tccs_rel_error(const struct TccsTensor *truth,
                               const struct TccsTensor *estimate,
                               double *out);

/**
 * Peak signal-to-noise ratio in dB; identical tensors give +infinity.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum TccsStatus tccs_psnr(const struct TccsTensor *truth,
                          const struct TccsTensor *estimate,
                          double *out);

/**
 * Mean SSIM over frontal slices.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum TccsStatus tccs_ssim(const struct TccsTensor *truth,
                          const struct TccsTensor *estimate,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TCCS_H */
