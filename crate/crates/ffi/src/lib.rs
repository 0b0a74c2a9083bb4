//! C ABI over the trust model, parameter estimator, planner and F test.
//!
//! Every function returns a [`TmStatus`]; on failure a message is available
//! from [`tm_last_error_message`] on the same thread. Panics never cross the
//! boundary and surface as `TM_STATUS_INTERNAL`.
//!
//! Actions are encoded as [`TmAction`], performance outcomes as `uint8_t`
//! (1 = success, 0 = failure).

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trustmdp::analytics::stats::f_sf;
use trustmdp::fit::{fit_params, FitSettings};
use trustmdp::model::{self, FeedbackSample};
use trustmdp::planner::{recommend, PlanningProblem};
use trustmdp::{Action, Performance, RewardConfig, TrustParams, TrustState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidState = 3,
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmAction {
    NoRarv = 0,
    UseRarv = 1,
}

impl From<Action> for TmAction {
    fn from(a: Action) -> Self {
        match a {
            Action::NoRarv => TmAction::NoRarv,
            Action::UseRarv => TmAction::UseRarv,
        }
    }
}

impl From<TmAction> for Action {
    fn from(a: TmAction) -> Self {
        match a {
            TmAction::NoRarv => Action::NoRarv,
            TmAction::UseRarv => Action::UseRarv,
        }
    }
}

/// Prior pseudo-counts and per-outcome experience weights.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmParams {
    pub alpha0: f64,
    pub beta0: f64,
    pub w_success: f64,
    pub w_failure: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmRewardConfig {
    pub w_health: f64,
    pub w_time: f64,
    pub w_trust: f64,
    pub health_loss: f64,
    pub rarv_time: f64,
    pub horizon: u32,
}

struct Failure(TmStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure(TmStatus::InvalidArgument, e.to_string())
}

impl From<trustmdp::Error> for Failure {
    fn from(e: trustmdp::Error) -> Self {
        invalid(e)
    }
}

fn trust_params(p: TmParams) -> FfiResult<TrustParams> {
    Ok(TrustParams::new(p.alpha0, p.beta0, p.w_success, p.w_failure)?)
}

impl From<TrustParams> for TmParams {
    fn from(p: TrustParams) -> Self {
        TmParams {
            alpha0: p.alpha0,
            beta0: p.beta0,
            w_success: p.w_success,
            w_failure: p.w_failure,
        }
    }
}

fn reward_config(c: TmRewardConfig) -> FfiResult<RewardConfig> {
    let cfg = RewardConfig {
        w_health: c.w_health,
        w_time: c.w_time,
        w_trust: c.w_trust,
        health_loss: c.health_loss,
        rarv_time: c.rarv_time,
        horizon: c.horizon as usize,
    };
    cfg.validate()?;
    Ok(cfg)
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> TmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            TmStatus::Internal
        }
    }
}

unsafe fn read<T: Copy>(p: *const T, name: &str) -> FfiResult<T> {
    if p.is_null() {
        return Err(Failure(TmStatus::NullPointer, format!("{name} is null")));
    }
    Ok(*p)
}

unsafe fn write<T>(p: *mut T, name: &str, value: T) -> FfiResult<()> {
    if p.is_null() {
        return Err(Failure(TmStatus::NullPointer, format!("{name} is null")));
    }
    p.write(value);
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> FfiResult<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(TmStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn perf_from(v: u8) -> FfiResult<Performance> {
    match v {
        0 => Ok(Performance::Failure),
        1 => Ok(Performance::Success),
        _ => Err(invalid(format!("performance must be 0 or 1, got {v}"))),
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn tm_params_default(out: *mut TmParams) -> TmStatus {
    guard(|| write(out, "out", TrustParams::default().into()))
}

/// Default reward weights for a mission of `horizon` sites.
#[no_mangle]
pub unsafe extern "C" fn tm_reward_config_default(horizon: u32, out: *mut TmRewardConfig) -> TmStatus {
    guard(|| {
        let d = RewardConfig::default();
        write(
            out,
            "out",
            TmRewardConfig {
                w_health: d.w_health,
                w_time: d.w_time,
                w_trust: d.w_trust,
                health_loss: d.health_loss,
                rarv_time: d.rarv_time,
                horizon,
            },
        )
    })
}

/// Mean of Beta(alpha, beta).
#[no_mangle]
pub unsafe extern "C" fn tm_trust_mean(alpha: f64, beta: f64, out: *mut f64) -> TmStatus {
    guard(|| write(out, "out", TrustState::new(alpha, beta)?.mean()))
}

/// One experience update of the state `(alpha, beta)` in place.
#[no_mangle]
pub unsafe extern "C" fn tm_update_state(
    params: *const TmParams,
    performance: u8,
    alpha: *mut f64,
    beta: *mut f64,
) -> TmStatus {
    guard(|| {
        let p = trust_params(read(params, "params")?)?;
        let s = TrustState::new(read(alpha, "alpha")?, read(beta, "beta")?)?;
        let next = s.update(perf_from(performance)?, &p);
        write(alpha, "alpha", next.alpha())?;
        write(beta, "beta", next.beta())
    })
}

/// 1 if following `recommendation` beats defying it, else 0.
#[no_mangle]
pub unsafe extern "C" fn tm_performance(
    recommendation: TmAction,
    threat_present: bool,
    cfg: *const TmRewardConfig,
    out: *mut u8,
) -> TmStatus {
    guard(|| {
        let cfg = reward_config(read(cfg, "cfg")?)?;
        let p = model::performance(recommendation.into(), threat_present, &cfg);
        write(out, "out", u8::from(p))
    })
}

/// Trust means after each of `n` outcomes; writes `n` values to `out`.
#[no_mangle]
pub unsafe extern "C" fn tm_predict_trajectory(
    params: *const TmParams,
    performances: *const u8,
    n: usize,
    out: *mut f64,
) -> TmStatus {
    guard(|| {
        let p = trust_params(read(params, "params")?)?;
        let perfs = slice(performances, n, "performances")?
            .iter()
            .map(|v| perf_from(*v))
            .collect::<FfiResult<Vec<_>>>()?;
        let traj = model::predict_trajectory(&p, &perfs);
        if n > 0 && out.is_null() {
            return Err(Failure(TmStatus::NullPointer, "out is null".into()));
        }
        ptr::copy_nonoverlapping(traj.as_ptr(), out, n);
        Ok(())
    })
}

/// Fits parameters to reported trust. `stages[i]` (1-based, increasing)
/// is the site at which `reported[i]` was given; `performances` covers at
/// least the last stage.
#[no_mangle]
pub unsafe extern "C" fn tm_fit_params(
    stages: *const u32,
    reported: *const f64,
    n_feedback: usize,
    performances: *const u8,
    n_performances: usize,
    init: *const TmParams,
    out: *mut TmParams,
) -> TmStatus {
    guard(|| {
        let stages = slice(stages, n_feedback, "stages")?;
        let reported = slice(reported, n_feedback, "reported")?;
        let feedback = stages
            .iter()
            .zip(reported)
            .map(|(s, r)| FeedbackSample::new(*s as usize, *r))
            .collect::<Result<Vec<_>, _>>()?;
        let perfs = slice(performances, n_performances, "performances")?
            .iter()
            .map(|v| perf_from(*v))
            .collect::<FfiResult<Vec<_>>>()?;
        let init = trust_params(read(init, "init")?)?;
        let fitted = fit_params(&feedback, &perfs, &init, &FitSettings::default())?;
        write(out, "out", fitted.into())
    })
}

/// Optimal recommendation at `stage` from state `(alpha, beta)`, assuming
/// threat probability `threat_prior` at every remaining site.
#[no_mangle]
pub unsafe extern "C" fn tm_recommend(
    params: *const TmParams,
    cfg: *const TmRewardConfig,
    stage: u32,
    alpha: f64,
    beta: f64,
    threat_prior: f64,
    out_action: *mut TmAction,
    out_value: *mut f64,
) -> TmStatus {
    guard(|| {
        let params = trust_params(read(params, "params")?)?;
        let cfg = reward_config(read(cfg, "cfg")?)?;
        let prob = PlanningProblem {
            params,
            cfg,
            start_stage: stage as usize,
            start_state: TrustState::new(alpha, beta)?,
            threat_priors: vec![threat_prior; cfg.horizon],
        };
        let (action, value) = recommend(&prob)?;
        write(out_action, "out_action", action.into())?;
        if !out_value.is_null() {
            out_value.write(value);
        }
        Ok(())
    })
}

/// Upper-tail probability of the F distribution with `(df1, df2)` degrees
/// of freedom.
#[no_mangle]
pub unsafe extern "C" fn tm_anova_p_value(f: f64, df1: f64, df2: f64, out: *mut f64) -> TmStatus {
    guard(|| {
        if !(df1 > 0.0 && df2 > 0.0 && f.is_finite() && f >= 0.0) {
            return Err(invalid("need f >= 0 and positive degrees of freedom"));
        }
        write(out, "out", f_sf(f, df1, df2))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Ready,
    AwaitingOutcome(Action),
    AwaitingTrust,
    Done,
}

/// Opaque online agent: recommends, observes outcomes, takes trust reports
/// and refits its parameters on a fixed cadence.
pub struct TmAgent {
    params: TrustParams,
    cfg: RewardConfig,
    threat_prior: f64,
    refit_every: u32,
    stage: usize,
    state: TrustState,
    performances: Vec<Performance>,
    feedback: Vec<FeedbackSample>,
    phase: Phase,
}

impl TmAgent {
    fn phase_error(&self, wanted: &str) -> Failure {
        Failure(
            TmStatus::InvalidState,
            format!("agent at site {} is {:?}; expected {wanted}", self.stage, self.phase),
        )
    }
}

unsafe fn agent<'a>(p: *mut TmAgent) -> FfiResult<&'a mut TmAgent> {
    p.as_mut().ok_or_else(|| Failure(TmStatus::NullPointer, "agent is null".into()))
}

/// Creates an agent; `refit_every = 0` disables refitting. Release with
/// [`tm_agent_free`].
#[no_mangle]
pub unsafe extern "C" fn tm_agent_new(
    params: *const TmParams,
    cfg: *const TmRewardConfig,
    threat_prior: f64,
    refit_every: u32,
    out: *mut *mut TmAgent,
) -> TmStatus {
    guard(|| {
        let params = trust_params(read(params, "params")?)?;
        let cfg = reward_config(read(cfg, "cfg")?)?;
        if !(0.0..=1.0).contains(&threat_prior) {
            return Err(invalid(format!("threat prior {threat_prior} outside [0, 1]")));
        }
        let a = Box::new(TmAgent {
            params,
            cfg,
            threat_prior,
            refit_every,
            stage: 1,
            state: params.initial_state(),
            performances: Vec::new(),
            feedback: Vec::new(),
            phase: Phase::Ready,
        });
        write(out, "out", Box::into_raw(a))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tm_agent_free(agent: *mut TmAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Recommendation for the current site. Repeated calls before
/// [`tm_agent_observe`] return the same action.
#[no_mangle]
pub unsafe extern "C" fn tm_agent_recommend(a: *mut TmAgent, out_action: *mut TmAction) -> TmStatus {
    guard(|| {
        let a = agent(a)?;
        let action = match a.phase {
            Phase::AwaitingOutcome(r) => r,
            Phase::Ready => {
                let prob = PlanningProblem {
                    params: a.params,
                    cfg: a.cfg,
                    start_stage: a.stage,
                    start_state: a.state,
                    threat_priors: vec![a.threat_prior; a.cfg.horizon],
                };
                let (r, _) = recommend(&prob)?;
                a.phase = Phase::AwaitingOutcome(r);
                r
            }
            _ => return Err(a.phase_error("a site to recommend for")),
        };
        write(out_action, "out_action", action.into())
    })
}

/// Records whether a threat was present at the current site and writes
/// the resulting performance (1 = success).
#[no_mangle]
pub unsafe extern "C" fn tm_agent_observe(a: *mut TmAgent, threat_present: bool, out_performance: *mut u8) -> TmStatus {
    guard(|| {
        let a = agent(a)?;
        let Phase::AwaitingOutcome(rec) = a.phase else {
            return Err(a.phase_error("an outstanding recommendation"));
        };
        let p = model::performance(rec, threat_present, &a.cfg);
        a.performances.push(p);
        a.state = a.state.update(p, &a.params);
        a.phase = Phase::AwaitingTrust;
        if !out_performance.is_null() {
            out_performance.write(u8::from(p));
        }
        Ok(())
    })
}

/// Takes the human's reported trust in `[0, 1]` for the current site and
/// advances to the next one, refitting when the cadence is due.
#[no_mangle]
pub unsafe extern "C" fn tm_agent_report_trust(a: *mut TmAgent, reported: f64) -> TmStatus {
    guard(|| {
        let a = agent(a)?;
        if a.phase != Phase::AwaitingTrust {
            return Err(a.phase_error("a trust report"));
        }
        a.feedback.push(FeedbackSample::new(a.stage, reported)?);
        let every = a.refit_every as usize;
        if every > 0 && a.stage.is_multiple_of(every) && a.stage < a.cfg.horizon {
            a.params = fit_params(&a.feedback, &a.performances, &a.params, &FitSettings::default())?;
            a.state = a
                .performances
                .iter()
                .fold(a.params.initial_state(), |s, p| s.update(*p, &a.params));
        }
        a.phase = if a.stage == a.cfg.horizon { Phase::Done } else { Phase::Ready };
        a.stage += 1;
        Ok(())
    })
}

/// Current trust estimate (Beta mean).
#[no_mangle]
pub unsafe extern "C" fn tm_agent_trust_estimate(a: *const TmAgent, out: *mut f64) -> TmStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| Failure(TmStatus::NullPointer, "agent is null".into()))?;
        write(out, "out", a.state.mean())
    })
}

/// Currently fitted parameters.
#[no_mangle]
pub unsafe extern "C" fn tm_agent_params(a: *const TmAgent, out: *mut TmParams) -> TmStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| Failure(TmStatus::NullPointer, "agent is null".into()))?;
        write(out, "out", a.params.into())
    })
}

/// 1-based index of the site the agent is on; horizon + 1 when finished.
#[no_mangle]
pub unsafe extern "C" fn tm_agent_stage(a: *const TmAgent, out: *mut u32) -> TmStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| Failure(TmStatus::NullPointer, "agent is null".into()))?;
        write(out, "out", a.stage as u32)
    })
}
