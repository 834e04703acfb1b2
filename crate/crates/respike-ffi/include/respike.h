/* C interface for the respike residual-spike covariance test. */

#ifndef RESPIKE_H
#define RESPIKE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define RESPIKE_OK 0

/**
 * A pointer argument was null or a dimension was zero.
 */
#define RESPIKE_ERR_INVALID_ARGUMENT 1

/**
 * No detectable spike in one of the samples.
 */
#define RESPIKE_ERR_NOT_DETECTABLE 2

/**
 * The variable counts of the two samples differ.
 */
#define RESPIKE_ERR_DIMENSION_MISMATCH 3

/**
 * Numerical failure (eigensolver, degenerate spectrum, complex branch).
 */
#define RESPIKE_ERR_NUMERICAL 4

/**
 * Unexpected internal error.
 */
#define RESPIKE_ERR_INTERNAL 5

/**
 * Filtering variant selector for [`respike_test`].
 */
#define RESPIKE_VARIANT_BOTH_FILTERED 0

/**
 * Only the X estimate is filtered; Y enters raw.
 */
#define RESPIKE_VARIANT_FILTERED_RAW 1

/**
 * Opaque result of a residual-spike test.
 */
typedef struct RespikeReport RespikeReport;

/**
 * Null-law parameters of Theorem 2.3 in the Marcenko-Pastur special case.
 */
typedef struct RespikeNullLawMp {
  double lambda_plus;
  double lambda_minus;
  double sigma_plus;
  double sigma_minus;
} RespikeNullLawMp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Run the residual-spike test on two row-major m-by-n data matrices
 * (rows are variables, columns are observations).
 *
 * On success writes a report handle to `out` and returns `RESPIKE_OK`;
 * the caller owns the handle and must free it with [`respike_report_free`].
 *
 * # Safety
 * `x` must point to `m * n_x` doubles, `y` to `m * n_y` doubles, and
 * `out` must be a valid pointer.
 */
int respike_test(const double *x,
                 const double *y,
                 uintptr_t m,
                 uintptr_t n_x,
                 uintptr_t n_y,
                 double alpha,
                 int variant,
                 bool center,
                 struct RespikeReport **out);

/**
 * Release a report handle. Passing null is a no-op.
 *
 * # Safety
 * `report` must have come from [`respike_test`] and not been freed before.
 */
void respike_report_free(struct RespikeReport *report);

/**
 * 1 if the test rejects equality at its alpha level, 0 otherwise
 * (also 0 for a null handle).
 *
 * # Safety
 * `report` must be a live handle from [`respike_test`] or null.
 */
int respike_report_reject(const struct RespikeReport *report);

/**
 * Observed extreme eigenvalues of the filtered product. Returns
 * `RESPIKE_ERR_INVALID_ARGUMENT` on null pointers.
 *
 * # Safety
 * `report` must be a live handle; `lambda_max` and `lambda_min` must be
 * valid pointers.
 */
int respike_report_extremes(const struct RespikeReport *report,
                            double *lambda_max,
                            double *lambda_min);

/**
 * Two-sided p-values for the upper and lower extremes.
 *
 * # Safety
 * `report` must be a live handle; `p_max` and `p_min` must be valid
 * pointers.
 */
int respike_report_pvalues(const struct RespikeReport *report, double *p_max, double *p_min);

/**
 * The full report serialized as JSON. The returned string must be freed
 * with [`respike_string_free`]; returns null for a null handle.
 *
 * # Safety
 * `report` must be a live handle or null.
 */
char *respike_report_json(const struct RespikeReport *report);

/**
 * Release a string returned by [`respike_report_json`]. Null is a no-op.
 *
 * # Safety
 * `s` must have come from this library and not been freed before.
 */
void respike_string_free(char *s);

/**
 * Closed-form null-law parameters for Marcenko-Pastur bulks with aspect
 * ratios `c_x = m / n_x` and `c_y = m / n_y`. Returns
 * `RESPIKE_ERR_INVALID_ARGUMENT` for non-positive ratios or a null `out`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
int respike_null_law_mp(double c_x, double c_y, uintptr_t m, struct RespikeNullLawMp *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RESPIKE_H */
