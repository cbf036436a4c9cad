#ifndef EULER_FORGE_H
#define EULER_FORGE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Offset schedule preset for the block levels.
 */
typedef enum EfSchedule {
  /**
   * staircase offsets with a coarse step; aliases whole periods
   */
  EF_SCHEDULE_COARSE = 0,
  /**
   * staircase offsets with a tighter step
   */
  EF_SCHEDULE_TIGHT = 1,
  /**
   * odd-multiple window offsets; certified disjoint for small level counts
   */
  EF_SCHEDULE_WINDOW = 2,
} EfSchedule;

/**
 * Status code returned by every fallible entry point.
 */
typedef enum EfStatus {
  EF_OK = 0,
  /**
   * a pointer argument was null
   */
  EF_NULL_ARGUMENT = 1,
  /**
   * parameters violate a documented constraint
   */
  EF_BAD_PARAMS = 2,
  /**
   * an internal computation failed
   */
  EF_INTERNAL = 3,
} EfStatus;

/**
 * Opaque block-parameter handle; create with `ef_params_new`, release with
 * `ef_params_free`.
 */
typedef struct EfParams EfParams;

/**
 * Residual maxima from the pointwise identity suite.
 */
typedef struct EfIdentityReport {
  double max_div_w;
  double max_q_vs_ww;
  double max_a_vs_dtw;
  uint64_t points;
  /**
   * 1 when every residual is at or below the suite tolerance
   */
  int32_t pass;
} EfIdentityReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a block-parameter handle. Dyadic arguments are given as
 * num / 2^log2_den. Returns null when the parameters are rejected.
 */
struct EfParams *ef_params_new(uint64_t lambda,
                               int64_t mu_num,
                               uint32_t mu_log2_den,
                               int64_t r_perp_num,
                               uint32_t r_perp_log2_den,
                               int64_t r_par_num,
                               uint32_t r_par_log2_den,
                               uint32_t levels,
                               uint32_t n0,
                               enum EfSchedule schedule);

/**
 * Release a handle created by `ef_params_new`. Null is a no-op.
 */
void ef_params_free(struct EfParams *params);

/**
 * Run the pointwise identity suite over random sample points.
 */
enum EfStatus ef_verify_identities(const struct EfParams *params,
                                   uint64_t points,
                                   uint64_t seed,
                                   struct EfIdentityReport *out);

/**
 * Calibrated second-moment matrix of the principal wave for one direction
 * (1..=4). Writes row-major [m11, m12, m21, m22].
 */
enum EfStatus ef_resonance(const struct EfParams *params, uint8_t direction, double *out);

/**
 * Certify the level schedule exactly and confirm with a randomized search.
 * Writes 1 to `out_disjoint` when no two moving supports ever overlap and
 * the collision count to `out_hits`.
 */
enum EfStatus ef_schedule_check(const struct EfParams *params,
                                uint64_t trials,
                                uint64_t seed,
                                int32_t *out_disjoint,
                                uint64_t *out_hits);

/**
 * Square-root coefficients of the four-direction rank-one decomposition of
 * a symmetric matrix (r11, r12, r22) near the identity; writes four values.
 */
enum EfStatus ef_decomposition_coeffs(double r11, double r12, double r22, double *out);

/**
 * Exact limit of the geometric error-budget series.
 */
enum EfStatus ef_budget_limit(uint64_t lambda, uint64_t m, uint64_t c, double *out);

/**
 * Library version as a static nul-terminated string.
 */
const char *ef_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* EULER_FORGE_H */
