#ifndef COCYCLE_LAB_H
#define COCYCLE_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. `CL_STATUS_OK` is zero; everything else is a failure.
 */
typedef enum CLStatus {
  CL_STATUS_OK = 0,
  CL_STATUS_NULL_POINTER = 1,
  CL_STATUS_INVALID_ARGUMENT = 2,
  CL_STATUS_INVALID_PROBABILITIES = 3,
  CL_STATUS_DIMENSION_MISMATCH = 4,
  CL_STATUS_SINGULAR_MATRIX = 5,
  CL_STATUS_OVERFLOW = 6,
  CL_STATUS_NOT_DIAGONALIZABLE = 7,
  CL_STATUS_ZERO_LYAPUNOV = 8,
  CL_STATUS_NOT_HYPERBOLIC = 9,
  CL_STATUS_NO_CONVERGENCE = 10,
  CL_STATUS_CONFIG_INVALID = 11,
  CL_STATUS_EXPERIMENT_FAILED = 12,
  /*
   Any other numerical precondition failure; see the error message.
   */
  CL_STATUS_PRECONDITION = 13,
  /*
   A Rust panic was caught at the boundary.
   */
  CL_STATUS_PANIC = 14,
} CLStatus;

/*
 Opaque cocycle handle.
 */
typedef struct CLCocycle CLCocycle;

/*
 Monte-Carlo Lyapunov estimate.
 */
typedef struct CLLyapunov {
  double mean;
  double std_err;
  /*
   Estimate of the bottom exponent on the same paths.
   */
  double bottom;
  double bottom_std_err;
} CLLyapunov;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *cl_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call into the library from the same thread.
 */
const char *cl_last_error_message(void);

/*
 Builds a cocycle from `k` row-major matrices (`4k` doubles) and `k`
 probabilities. `probs` may be NULL for the uniform law.

 # Safety
 `mats` must point to `4k` doubles, `probs` to `k` doubles or be NULL, and
 `out` must be a valid pointer.
 */
enum CLStatus cl_cocycle_new(const double *mats,
                             const double *probs,
                             size_t k,
                             struct CLCocycle **out);

/*
 Builds a cocycle from `{"probs": [...], "mats": [[a, b, c, d], ...]}`.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CLStatus cl_cocycle_from_json(const char *json, struct CLCocycle **out);

/*
 Releases a handle; NULL is ignored.

 # Safety
 `h` must come from this library and not be used afterwards.
 */
void cl_cocycle_free(struct CLCocycle *h);

/*
 Number of matrices in the cocycle, 0 for NULL.

 # Safety
 `h` must be NULL or a live handle.
 */
size_t cl_cocycle_size(const struct CLCocycle *h);

/*
 Serializes the cocycle as JSON; free the result with [`cl_string_free`].

 # Safety
 `h` must be a live handle and `out` a valid pointer.
 */
enum CLStatus cl_cocycle_to_json(const struct CLCocycle *h, char **out);

/*
 `|Σ p_j log|θ_j||` for the cocycle `diag(θ_j, 1/θ_j)`.

 # Safety
 `thetas` and `probs` must point to `k` doubles, `out` must be valid.
 */
enum CLStatus cl_closed_form_diag_le(const double *thetas,
                                     const double *probs,
                                     size_t k,
                                     double *out);

/*
 Monte-Carlo estimate of the top exponent at scale `n`.

 # Safety
 `h` must be a live handle and `out` a valid pointer.
 */
enum CLStatus cl_mc_le(const struct CLCocycle *h,
                       size_t n,
                       size_t samples,
                       uint64_t seed,
                       struct CLLyapunov *out);

/*
 Fraction of paths with `|(1/n) log‖A^(n)‖ − reference| > epsilon` and its
 standard error.

 # Safety
 `h` must be a live handle; `prob` and `std_err` valid pointers.
 */
enum CLStatus cl_ldt_tail(const struct CLCocycle *h,
                          size_t n,
                          double epsilon,
                          double reference,
                          size_t samples,
                          uint64_t seed,
                          double *prob,
                          double *std_err);

/*
 Top exponent from the stationary measure of the grid operator with `g`
 nodes per symbol.

 # Safety
 `h` must be a live handle and `out` a valid pointer.
 */
enum CLStatus cl_furstenberg_le(const struct CLCocycle *h, size_t g, double tol, double *out);

/*
 Runs a named experiment (`"le"`, `"ids"`, ...) on a JSON config, as the
 command-line tool does. On success `csv_out` receives the CSV artifact and
 `report_out`, when not NULL, the JSON report; free both with
 [`cl_string_free`]. `workers` of 0 uses every core.

 # Safety
 `experiment` and `config_json` must be NUL-terminated strings, `csv_out`
 a valid pointer and `report_out` valid or NULL.
 */
enum CLStatus cl_run_experiment(const char *experiment,
                                const char *config_json,
                                uint64_t seed,
                                size_t workers,
                                char **csv_out,
                                char **report_out);

/*
 Releases a string returned by this library; NULL is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void cl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COCYCLE_LAB_H */
