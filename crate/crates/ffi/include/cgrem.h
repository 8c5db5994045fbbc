#ifndef CGREM_H
#define CGREM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum CgremStatus {
  CGREM_STATUS_OK = 0,
  CGREM_STATUS_NULL_POINTER = 1,
  CGREM_STATUS_INVALID_ARGUMENT = 2,
  CGREM_STATUS_DIMENSION = 3,
  CGREM_STATUS_RESOURCE = 4,
  CGREM_STATUS_MISSING_DATA = 5,
  CGREM_STATUS_UNSUPPORTED = 6,
  CGREM_STATUS_PARSE = 7,
  CGREM_STATUS_IO = 8,
  CGREM_STATUS_PANIC = 9,
} CgremStatus;

/*
 Outcome of a condition audit.
 */
typedef enum CgremVerdict {
  CGREM_VERDICT_HOLDS_WITH_EQUALITY = 0,
  CGREM_VERDICT_HOLDS = 1,
  CGREM_VERDICT_VIOLATED = 2,
} CgremVerdict;

/*
 Opaque covariance model.
 */
typedef struct CgremModel CgremModel;

/*
 Summary of one partition audit.
 */
typedef struct CgremConditionResult {
  double max_gap;
  double min_gap;
  uint64_t witness_sigma;
  uint64_t witness_tau;
  uint64_t pairs_checked;
  enum CgremVerdict verdict;
} CgremConditionResult;

/*
 A Monte Carlo estimate and its standard error.
 */
typedef struct CgremEstimate {
  double value;
  double std_error;
  size_t samples;
} CgremEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread; empty if none.
 */
const char *cgrem_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *cgrem_version(void);

/*
 Parses a model rule such as `sk`, `pspin:3` or `mixed:2=0.5,4=0.5`.
 `n = 0` takes the size from GREM tree or custom matrix files.

 # Safety
 `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CgremStatus cgrem_model_parse(const char *spec, size_t n, struct CgremModel **out);

/*
 Releases a model; null is ignored.

 # Safety
 `model` must come from `cgrem_model_parse` and not be freed twice.
 */
void cgrem_model_free(struct CgremModel *model);

/*
 # Safety
 Pointers must be valid.
 */
enum CgremStatus cgrem_model_n(const struct CgremModel *model, size_t *out);

/*
 Overlap of two configurations of `n` spins.

 # Safety
 `out` must be valid.
 */
enum CgremStatus cgrem_overlap(size_t n, uint64_t sigma, uint64_t tau, double *out);

/*
 Covariance of the energies at two configurations.

 # Safety
 Pointers must be valid.
 */
enum CgremStatus cgrem_covariance(const struct CgremModel *model,
                                  uint64_t sigma,
                                  uint64_t tau,
                                  double *out);

/*
 Superadditivity gap at one pair for the partition whose first block is
 `mask`. Nonpositive gaps satisfy the condition.

 # Safety
 Pointers must be valid.
 */
enum CgremStatus cgrem_condition_gap(const struct CgremModel *model,
                                     uint64_t mask,
                                     uint64_t sigma,
                                     uint64_t tau,
                                     double *out);

/*
 Exhaustive audit of one partition. A negative tolerance selects the
 model's default.

 # Safety
 Pointers must be valid.
 */
enum CgremStatus cgrem_check_partition(const struct CgremModel *model,
                                       uint64_t mask,
                                       double tolerance,
                                       struct CgremConditionResult *out);

/*
 Audit over all partitions (`all_partitions != 0`) or one per first-block
 size. Writes the overall verdict and the largest gap found.

 # Safety
 Pointers must be valid.
 */
enum CgremStatus cgrem_check_condition(const struct CgremModel *model,
                                       int32_t all_partitions,
                                       double tolerance,
                                       enum CgremVerdict *out_verdict,
                                       double *out_max_gap);

/*
 Positive semidefiniteness of the 2^N covariance matrix.

 # Safety
 Pointers must be valid.
 */
enum CgremStatus cgrem_check_psd(const struct CgremModel *model,
                                 bool *out_psd,
                                 double *out_min_eigenvalue);

/*
 Quenched α_N(β) from `samples` draws under master `seed`.

 # Safety
 Pointers must be valid.
 */
enum CgremStatus cgrem_quenched_alpha(const struct CgremModel *model,
                                      double beta,
                                      size_t samples,
                                      uint64_t seed,
                                      struct CgremEstimate *out);

/*
 Derivative of the interpolating free energy at `t` for the partition
 whose first block is `mask`.

 # Safety
 Pointers must be valid.
 */
enum CgremStatus cgrem_interp_derivative(const struct CgremModel *model,
                                         uint64_t mask,
                                         double beta,
                                         double t,
                                         size_t samples,
                                         uint64_t seed,
                                         struct CgremEstimate *out);

/*
 ln 2 + β²/2.
 */
double cgrem_jensen_bound(double beta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGREM_H */
