#ifndef OODCP_H
#define OODCP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OodcpStatus {
  OODCP_STATUS_OK = 0,
  OODCP_STATUS_NULL_POINTER = 1,
  OODCP_STATUS_INVALID_ARGUMENT = 2,
  OODCP_STATUS_EMPTY_INPUT = 3,
  OODCP_STATUS_NON_FINITE_INPUT = 4,
  /*
   The request is valid but only the full prediction set satisfies it.
   */
  OODCP_STATUS_INFEASIBLE = 5,
  OODCP_STATUS_INTERNAL = 6,
} OodcpStatus;

typedef enum OodcpFamily {
  OODCP_FAMILY_CHI_SQUARE = 0,
  OODCP_FAMILY_TOTAL_VARIATION = 1,
  OODCP_FAMILY_KULLBACK_LEIBLER = 2,
} OodcpFamily;

/*
 Opaque set of per-domain calibration scores.
 */
typedef struct OodcpCalibration OodcpCalibration;

/*
 Opaque `g` curve for one family and radius.
 */
typedef struct OodcpGCurve OodcpGCurve;

/*
 Robust threshold report. The optional fields are NaN when `feasible` is
 false; `threshold` is then `+inf`.
 */
typedef struct OodcpThresholdReport {
  double threshold;
  bool feasible;
  double epsilon_star;
  double corrected_alpha;
  double dkw_delta;
  double quantile_level;
} OodcpThresholdReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call into this library on the same
 thread.
 */
const char *oodcp_last_error_message(void);

/*
 Library version as a NUL-terminated string with static lifetime.
 */
const char *oodcp_version(void);

/*
 Creates a curve; `*out_curve` receives the handle.

 # Safety
 `out_curve` must be null or valid for writes.
 */
enum OodcpStatus oodcp_gcurve_new(enum OodcpFamily family,
                                  double rho,
                                  struct OodcpGCurve **out_curve);

/*
 # Safety
 `curve` must be null or a handle from [`oodcp_gcurve_new`] not yet freed.
 */
void oodcp_gcurve_free(struct OodcpGCurve *curve);

/*
 # Safety
 `curve` must be a live handle and `out_value` valid for writes.
 */
enum OodcpStatus oodcp_gcurve_g(const struct OodcpGCurve *curve, double beta, double *out_value);

/*
 # Safety
 `curve` must be a live handle and `out_value` valid for writes.
 */
enum OodcpStatus oodcp_gcurve_g_inverse(const struct OodcpGCurve *curve,
                                        double tau,
                                        double *out_value);

/*
 Creates an empty calibration set.

 # Safety
 `out_calibration` must be null or valid for writes.
 */
enum OodcpStatus oodcp_calibration_new(struct OodcpCalibration **out_calibration);

/*
 Appends one source domain; the scores are copied.

 # Safety
 `calibration` must be a live handle and `scores` valid for `len` reads.
 */
enum OodcpStatus oodcp_calibration_add_domain(struct OodcpCalibration *calibration,
                                              const double *scores,
                                              size_t len);

/*
 Number of domains added so far; 0 for a null handle.

 # Safety
 `calibration` must be null or a live handle.
 */
size_t oodcp_calibration_domains(const struct OodcpCalibration *calibration);

/*
 # Safety
 `calibration` must be null or a handle from [`oodcp_calibration_new`] not
 yet freed.
 */
void oodcp_calibration_free(struct OodcpCalibration *calibration);

/*
 Robust threshold over every domain in `calibration`. `epsilon_grid` of 0
 selects the default grid. Returns [`OodcpStatus::Infeasible`] with a
 filled full-set report when no finite threshold exists.

 # Safety
 `calibration` must be a live handle and `out_report` valid for writes.
 */
enum OodcpStatus oodcp_robust_threshold(const struct OodcpCalibration *calibration,
                                        enum OodcpFamily family,
                                        double rho,
                                        double alpha,
                                        size_t epsilon_grid,
                                        struct OodcpThresholdReport *out_report);

/*
 Plain split conformal threshold; `+inf` when the rank exceeds the sample.

 # Safety
 `scores` must be valid for `len` reads and `out_threshold` for writes.
 */
enum OodcpStatus oodcp_scp_threshold(const double *scores,
                                     size_t len,
                                     double alpha,
                                     double *out_threshold);

/*
 `2 sum_i exp(-2 m_i eps^2)`.

 # Safety
 `ms` must be valid for `len` reads and `out_delta` for writes.
 */
enum OodcpStatus oodcp_dkw_failure_bound(const size_t *ms,
                                         size_t len,
                                         double epsilon,
                                         double *out_delta);

/*
 Corrected miscoverage for a fixed DKW slack.

 # Safety
 `ms` must be valid for `len` reads and `out_alpha` for writes.
 */
enum OodcpStatus oodcp_corrected_alpha(const size_t *ms,
                                       size_t len,
                                       enum OodcpFamily family,
                                       double rho,
                                       double alpha,
                                       double epsilon,
                                       double *out_alpha);

/*
 Finite-sample coverage lower bound for a fixed DKW slack.

 # Safety
 `ms` must be valid for `len` reads and `out_bound` for writes.
 */
enum OodcpStatus oodcp_coverage_lower_bound(const size_t *ms,
                                            size_t len,
                                            enum OodcpFamily family,
                                            double rho,
                                            double alpha,
                                            double epsilon,
                                            double *out_bound);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OODCP_H */
