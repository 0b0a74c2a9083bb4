#ifndef TRUSTMDP_H
#define TRUSTMDP_H

/* Generated from the trustmdp-ffi crate by cbindgen. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TmStatus {
  TM_STATUS_OK = 0,
  TM_STATUS_NULL_POINTER = 1,
  TM_STATUS_INVALID_ARGUMENT = 2,
  TM_STATUS_INVALID_STATE = 3,
  TM_STATUS_INTERNAL = 4,
} TmStatus;

typedef enum TmAction {
  TM_ACTION_NO_RARV = 0,
  TM_ACTION_USE_RARV = 1,
} TmAction;

/*
 Opaque online agent: recommends, observes outcomes, takes trust reports
 and refits its parameters on a fixed cadence.
 */
typedef struct TmAgent TmAgent;

/*
 Prior pseudo-counts and per-outcome experience weights.
 */
typedef struct TmParams {
  double alpha0;
  double beta0;
  double w_success;
  double w_failure;
} TmParams;

typedef struct TmRewardConfig {
  double w_health;
  double w_time;
  double w_trust;
  double health_loss;
  double rarv_time;
  uint32_t horizon;
} TmRewardConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. The pointer
 stays valid until the next call into this library on the same thread.
 */
const char *tm_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *tm_version(void);

enum TmStatus tm_params_default(struct TmParams *out);

/*
 Default reward weights for a mission of `horizon` sites.
 */
enum TmStatus tm_reward_config_default(uint32_t horizon, struct TmRewardConfig *out);

/*
 Mean of Beta(alpha, beta).
 */
enum TmStatus tm_trust_mean(double alpha, double beta, double *out);

/*
 One experience update of the state `(alpha, beta)` in place.
 */
enum TmStatus tm_update_state(const struct TmParams *params,
                              uint8_t performance,
                              double *alpha,
                              double *beta);

/*
 1 if following `recommendation` beats defying it, else 0.
 */
enum TmStatus tm_performance(enum TmAction recommendation,
                             bool threat_present,
                             const struct TmRewardConfig *cfg,
                             uint8_t *out);

/*
 Trust means after each of `n` outcomes; writes `n` values to `out`.
 */
enum TmStatus tm_predict_trajectory(const struct TmParams *params,
                                    const uint8_t *performances,
                                    uintptr_t n,
                                    double *out);

/*
 Fits parameters to reported trust. `stages[i]` (1-based, increasing)
 is the site at which `reported[i]` was given; `performances` covers at
 least the last stage.
 */
enum TmStatus tm_fit_params(const uint32_t *stages,
                            const double *reported,
                            uintptr_t n_feedback,
                            const uint8_t *performances,
                            uintptr_t n_performances,
                            const struct TmParams *init,
                            struct TmParams *out);

/*
 Optimal recommendation at `stage` from state `(alpha, beta)`, assuming
 threat probability `threat_prior` at every remaining site.
 */
enum TmStatus tm_recommend(const struct TmParams *params,
                           const struct TmRewardConfig *cfg,
                           uint32_t stage,
                           double alpha,
                           double beta,
                           double threat_prior,
                           enum TmAction *out_action,
                           double *out_value);

/*
 Upper-tail probability of the F distribution with `(df1, df2)` degrees
 of freedom.
 */
enum TmStatus tm_anova_p_value(double f, double df1, double df2, double *out);

/*
 Creates an agent; `refit_every = 0` disables refitting. Release with
 [`tm_agent_free`].
 */
enum TmStatus tm_agent_new(const struct TmParams *params,
                           const struct TmRewardConfig *cfg,
                           double threat_prior,
                           uint32_t refit_every,
                           struct TmAgent **out);

void tm_agent_free(struct TmAgent *agent);

/*
 Recommendation for the current site. Repeated calls before
 [`tm_agent_observe`] return the same action.
 */
enum TmStatus tm_agent_recommend(struct TmAgent *a, enum TmAction *out_action);

/*
 Records whether a threat was present at the current site and writes
 the resulting performance (1 = success).
 */
enum TmStatus tm_agent_observe(struct TmAgent *a, bool threat_present, uint8_t *out_performance);

/*
 Takes the human's reported trust in `[0, 1]` for the current site and
 advances to the next one, refitting when the cadence is due.
 */
enum TmStatus tm_agent_report_trust(struct TmAgent *a, double reported);

/*
 Current trust estimate (Beta mean).
 */
enum TmStatus tm_agent_trust_estimate(const struct TmAgent *a, double *out);

/*
 Currently fitted parameters.
 */
enum TmStatus tm_agent_params(const struct TmAgent *a, struct TmParams *out);

/*
 1-based index of the site the agent is on; horizon + 1 when finished.
 */
enum TmStatus tm_agent_stage(const struct TmAgent *a, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRUSTMDP_H */
