#ifndef RSSA_H
#define RSSA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RssaMode {
  RSSA_MODE_REFERENCE_PASSED = 0,
  RSSA_MODE_RSSA_OVERRIDE = 1,
  RSSA_MODE_BASELINE_OVERRIDE = 2,
  RSSA_MODE_INFEASIBLE_FALLBACK = 3,
} RssaMode;

typedef enum RssaStatus {
  RSSA_STATUS_OK = 0,
  RSSA_STATUS_NULL_POINTER = 1,
  RSSA_STATUS_INVALID_UTF8 = 2,
  RSSA_STATUS_INVALID_ARGUMENT = 3,
  RSSA_STATUS_SCENARIO = 4,
  RSSA_STATUS_NUMERICAL = 5,
  RSSA_STATUS_INFEASIBLE = 6,
  RSSA_STATUS_FINISHED = 7,
  RSSA_STATUS_PANIC = 8,
} RssaStatus;

typedef struct RssaTrial RssaTrial;

/**
 * One logged tick. `d` and `phi` are NaN for the no-obstacle run.
 */
typedef struct RssaTick {
  uint64_t k;
  double t;
  double theta[2];
  double theta_dot[2];
  double u_r[2];
  double u[2];
  double cursor[2];
  double d;
  double phi;
  double phi_alpha;
  double xi_hat[3];
  int32_t mode;
  uint64_t goal_index;
  bool clipped;
  bool infeasible;
} RssaTick;

/**
 * Running metrics. Distances are NaN when nothing was logged.
 */
typedef struct RssaMetrics {
  uint64_t ticks;
  uint64_t goals_reached;
  uint64_t violations;
  double min_distance;
  double avg_distance;
  uint64_t clipped_ticks;
  uint64_t infeasible_ticks;
  bool aborted;
} RssaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *rssa_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rssa_version(void);

/**
 * Create a trial from scenario JSON and a method id (`NO_OBSTACLE`, `M0`..`M4`).
 *
 * # Safety
 * `scenario_json` and `method` must be NUL-terminated strings and `out` a
 * valid pointer.
 */
enum RssaStatus rssa_trial_new(const char *scenario_json,
                               const char *method,
                               struct RssaTrial **out);

/**
 * Advance one tick. Returns `Finished` once the step budget is spent and
 * `Numerical` if the trial aborted.
 *
 * # Safety
 * `trial` must come from [`rssa_trial_new`]; `out` may be null.
 */
enum RssaStatus rssa_trial_step(struct RssaTrial *trial, struct RssaTick *out);

/**
 * Move the cursor of a live trial; takes effect on the next tick.
 *
 * # Safety
 * `trial` must come from [`rssa_trial_new`].
 */
enum RssaStatus rssa_trial_set_cursor(struct RssaTrial *trial, double x, double y);

/**
 * Metrics over the ticks run so far.
 *
 * # Safety
 * `trial` must come from [`rssa_trial_new`] and `out` be valid.
 */
enum RssaStatus rssa_trial_metrics(const struct RssaTrial *trial, struct RssaMetrics *out);

/**
 * Release a trial. Null is ignored.
 *
 * # Safety
 * `trial` must come from [`rssa_trial_new`] and not be used afterwards.
 */
void rssa_trial_free(struct RssaTrial *trial);

/**
 * Alignment certificate of a family: `alpha` is the smallest pairwise
 * cosine, `beta` the smallest norm.
 *
 * # Safety
 * `lg` holds `2 * n` values, row-major; outputs must be valid.
 */
enum RssaStatus rssa_certificate(const double *lg, size_t n, double *alpha, double *beta);

/**
 * Robust filter for one tick. `lf` holds `n` drift terms and `lg` the
 * `n` control rows (row-major, `2 * n` values). When `activation > 0`
 * and `u_r` is not robustly safe, the minimum-norm robust control is
 * returned; an infeasible family falls back to projecting against the
 * worst sample with identity metric.
 *
 * # Safety
 * Array lengths must match `n`; `u_r` and `u_out` hold 2 values.
 */
enum RssaStatus rssa_safe_control(const double *lf,
                                  const double *lg,
                                  size_t n,
                                  double activation,
                                  double eta,
                                  const double *u_r,
                                  double *u_out,
                                  int32_t *mode_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSSA_H */
