/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef STACKELBERG_H
#define STACKELBERG_H

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum StkStatus {
  STK_STATUS_OK = 0,
  STK_STATUS_NULL_POINTER = 1,
  STK_STATUS_INVALID_ARGUMENT = 2,
  STK_STATUS_DIMENSION_MISMATCH = 3,
  STK_STATUS_CONFIG = 4,
  STK_STATUS_DEGENERATE_GAME = 5,
  STK_STATUS_DIVERGED = 6,
  STK_STATUS_NON_FINITE = 7,
  STK_STATUS_UNAVAILABLE = 8,
  STK_STATUS_IO = 9,
  STK_STATUS_PANIC = 10,
} StkStatus;

/*
 Opaque game handle.
 */
typedef struct StkGame StkGame;

/*
 Opaque trace handle.
 */
typedef struct StkTrace StkTrace;

/*
 Risks of both players at both equilibria.
 */
typedef struct StkRisks {
  double dm_leads_risk_dm;
  double dm_leads_risk_agents;
  double agents_lead_risk_dm;
  double agents_lead_risk_agents;
} StkRisks;

/*
 Scalar fields of one trace epoch.
 */
typedef struct StkEpoch {
  size_t epoch;
  double loss_dm;
  double loss_agents;
  double running_avg_dm;
  double running_avg_agents;
  /*
   NaN when `has_br_gap` is 0.
   */
  double br_gap;
  int has_br_gap;
} StkEpoch;

/*
 Message of the last failed call on this thread (empty after a success).
 The pointer stays valid until the next call into this library on the
 same thread.
 */
const char *stk_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *stk_version(void);

/*
 Linear regression game with `dim`-dimensional `beta`.

 # Safety
 `beta` must point to `dim` doubles; `out` must be writable.
 */
enum StkStatus stk_game_linear_new(const double *beta,
                                   size_t dim,
                                   double sigma2,
                                   double budget,
                                   struct StkGame **out);

/*
 Any game from its JSON description, e.g.
 `{"variant": "logistic-costly", "p": 0.5, "alpha": [1.5, 1.5], "n": 100, "lambda": 1}`.

 # Safety
 `json` must be NUL-terminated; `out` must be writable.
 */
enum StkStatus stk_game_from_json(const char *json, struct StkGame **out);

/*
 # Safety
 `game` must be null or a handle from this library not yet freed.
 */
void stk_game_free(struct StkGame *game);

/*
 Dimension of the game, or 0 for a null handle.

 # Safety
 `game` must be null or a live handle.
 */
size_t stk_game_dim(const struct StkGame *game);

/*
 Decision-maker's loss `L(mu, theta)`.

 # Safety
 `mu` and `theta` must point to `dim` doubles; `out` must be writable.
 */
enum StkStatus stk_decision_loss(const struct StkGame *game,
                                 const double *mu,
                                 const double *theta,
                                 size_t dim,
                                 double *out);

/*
 Agents' loss `R(mu, theta)`.

 # Safety
 As [`stk_decision_loss`].
 */
enum StkStatus stk_agent_loss(const struct StkGame *game,
                              const double *mu,
                              const double *theta,
                              size_t dim,
                              double *out);

/*
 `grad_theta L(mu, theta)` into `out[0..dim]`.

 # Safety
 `mu`, `theta` and `out` must each hold `dim` doubles.
 */
enum StkStatus stk_decision_grad_theta(const struct StkGame *game,
                                       const double *mu,
                                       const double *theta,
                                       size_t dim,
                                       double *out);

/*
 `grad_mu R(mu, theta)` into `out[0..dim]`.

 # Safety
 As [`stk_decision_grad_theta`].
 */
enum StkStatus stk_agent_grad_mu(const struct StkGame *game,
                                 const double *mu,
                                 const double *theta,
                                 size_t dim,
                                 double *out);

/*
 Both Stackelberg equilibria with default oracle settings. `theta_se` and
 `mu_se` receive the leaders' points; `risks` both players' risks.

 # Safety
 `theta_se` and `mu_se` must hold `dim` doubles; `risks` must be writable.
 */
enum StkStatus stk_equilibria(const struct StkGame *game,
                              double *theta_se,
                              double *mu_se,
                              size_t dim,
                              struct StkRisks *risks);

/*
 Runs the dynamics described by a JSON run spec, e.g.
 `{"order": "proactive", "epochs": 5000, "inner_steps": 50, "eta0": 0.02,
   "eta_exponent": 0.75, "delta0": 0.5, "delta_exponent": 0.25, "fast_step": 1}`.
 On divergence the status is `Diverged` and `out` receives the partial trace.

 # Safety
 `run_json` must be NUL-terminated; `out` must be writable.
 */
enum StkStatus stk_run(const struct StkGame *game,
                       const char *run_json,
                       uint64_t seed,
                       struct StkTrace **out);

/*
 # Safety
 `trace` must be null or a handle from [`stk_run`] not yet freed.
 */
void stk_trace_free(struct StkTrace *trace);

/*
 Number of recorded epochs, or 0 for a null handle.

 # Safety
 `trace` must be null or a live handle.
 */
size_t stk_trace_len(const struct StkTrace *trace);

/*
 Copies epoch `index` (0-based). `theta` and `mu` may be null to skip them.

 # Safety
 Non-null `theta`/`mu` must hold `dim` doubles; `record` must be writable.
 */
enum StkStatus stk_trace_epoch(const struct StkTrace *trace,
                               size_t index,
                               double *theta,
                               double *mu,
                               size_t dim,
                               struct StkEpoch *record);

#endif  /* STACKELBERG_H */
