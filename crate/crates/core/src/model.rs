//! Experience-based trust model.
//!
//! A human's trust in the agent is `Beta(alpha, beta)` distributed, where
//! `alpha` and `beta` accumulate positive and negative experience. Each site
//! adds `w_success` to `alpha` when the agent performed well and `w_failure`
//! to `beta` otherwise. Performance is judged against the immediate task
//! reward: the agent succeeded iff following its recommendation paid strictly
//! more than defying it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to reported trust before fitting or taking logs.
pub const FEEDBACK_FLOOR: f64 = 0.01;
/// Upper bound applied to reported trust before fitting.
pub const FEEDBACK_CEIL: f64 = 0.99;

/// Recommendation (or executed choice) at a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Deploy the armored rescue vehicle before entering.
    UseRarv,
    /// Breach the site directly.
    NoRarv,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::NoRarv, Action::UseRarv];

    pub fn opposite(self) -> Action {
        match self {
            Action::UseRarv => Action::NoRarv,
            Action::NoRarv => Action::UseRarv,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::UseRarv => "use_rarv",
            Action::NoRarv => "no_rarv",
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "use_rarv" => Ok(Action::UseRarv),
            "no_rarv" => Ok(Action::NoRarv),
            other => Err(Error::invalid(format!("unknown action {other:?}"))),
        }
    }
}

/// Binary performance of the agent at one site. Serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Performance {
    Failure,
    Success,
}

impl Performance {
    pub fn is_success(self) -> bool {
        matches!(self, Performance::Success)
    }

    pub fn from_bool(success: bool) -> Self {
        if success {
            Performance::Success
        } else {
            Performance::Failure
        }
    }
}

impl From<Performance> for u8 {
    fn from(p: Performance) -> u8 {
        match p {
            Performance::Failure => 0,
            Performance::Success => 1,
        }
    }
}

impl TryFrom<u8> for Performance {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Performance::Failure),
            1 => Ok(Performance::Success),
            other => Err(Error::invalid(format!("performance must be 0 or 1, got {other}"))),
        }
    }
}

/// Accumulated positive (`alpha`) and negative (`beta`) experience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState")]
pub struct TrustState {
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
struct RawState {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawState> for TrustState {
    type Error = Error;

    fn try_from(raw: RawState) -> Result<Self> {
        TrustState::new(raw.alpha, raw.beta)
    }
}

impl TrustState {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!(
                "trust state needs finite positive alpha and beta, got ({alpha}, {beta})"
            )));
        }
        Ok(TrustState { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Point estimate of trust: the Beta mean.
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// State after a further `successes` and `failures`, in closed form.
    pub fn advanced(&self, successes: usize, failures: usize, params: &TrustParams) -> TrustState {
        TrustState {
            alpha: self.alpha + successes as f64 * params.w_success,
            beta: self.beta + failures as f64 * params.w_failure,
        }
    }

    /// One transition. Only the coordinate selected by `p` changes.
    pub fn update(self, p: Performance, params: &TrustParams) -> TrustState {
        match p {
            Performance::Success => TrustState {
                alpha: self.alpha + params.w_success,
                beta: self.beta,
            },
            Performance::Failure => TrustState {
                alpha: self.alpha,
                beta: self.beta + params.w_failure,
            },
        }
    }
}

/// Free-function form of [`TrustState::mean`].
pub fn trust_mean(state: &TrustState) -> f64 {
    state.mean()
}

/// Free-function form of [`TrustState::update`].
pub fn update_state(state: TrustState, p: Performance, params: &TrustParams) -> TrustState {
    state.update(p, params)
}

/// Personalized trust dynamics `(alpha0, beta0, w_success, w_failure)`.
///
/// Predictions depend only on the ratios between the four fields, so fits
/// are compared on predicted trajectories, never on raw parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct TrustParams {
    pub alpha0: f64,
    pub beta0: f64,
    pub w_success: f64,
    pub w_failure: f64,
}

#[derive(Deserialize)]
struct RawParams {
    alpha0: f64,
    beta0: f64,
    w_success: f64,
    w_failure: f64,
}

impl TryFrom<RawParams> for TrustParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        TrustParams::new(r.alpha0, r.beta0, r.w_success, r.w_failure)
    }
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            alpha0: 2.0,
            beta0: 2.0,
            w_success: 1.0,
            w_failure: 1.0,
        }
    }
}

impl TrustParams {
    pub fn new(alpha0: f64, beta0: f64, w_success: f64, w_failure: f64) -> Result<Self> {
        let p = TrustParams {
            alpha0,
            beta0,
            w_success,
            w_failure,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "trust parameters must be finite and positive, got {v:?}"
            )))
        }
    }

    pub fn initial_state(&self) -> TrustState {
        TrustState {
            alpha: self.alpha0,
            beta: self.beta0,
        }
    }

    /// State after `successes` and `failures`, in closed form.
    pub fn state_after(&self, successes: usize, failures: usize) -> TrustState {
        TrustState {
            alpha: self.alpha0 + successes as f64 * self.w_success,
            beta: self.beta0 + failures as f64 * self.w_failure,
        }
    }

    pub fn scaled(&self, c: f64) -> TrustParams {
        TrustParams {
            alpha0: self.alpha0 * c,
            beta0: self.beta0 * c,
            w_success: self.w_success * c,
            w_failure: self.w_failure * c,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha0, self.beta0, self.w_success, self.w_failure]
    }

    /// Builds parameters from a raw vector without validation. Callers keep
    /// the positivity invariant by projecting first.
    pub(crate) fn from_array(v: [f64; 4]) -> TrustParams {
        TrustParams {
            alpha0: v[0],
            beta0: v[1],
            w_success: v[2],
            w_failure: v[3],
        }
    }
}

/// Reward weights and task constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_health: f64,
    pub w_time: f64,
    pub w_trust: f64,
    /// Health points lost when a threat hits an unprotected soldier.
    pub health_loss: f64,
    /// Seconds spent deploying the RARV.
    pub rarv_time: f64,
    /// Number of sites in the mission.
    pub horizon: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            w_health: 10.0,
            w_time: 1.0,
            w_trust: 1.0,
            health_loss: 5.0,
            rarv_time: 10.0,
            horizon: 100,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("w_health", self.w_health),
            ("w_time", self.w_time),
            ("w_trust", self.w_trust),
            ("health_loss", self.health_loss),
            ("rarv_time", self.rarv_time),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(())
    }

    /// Weighted health cost `H = w_health * health_loss`.
    pub fn health_cost(&self) -> f64 {
        self.w_health * self.health_loss
    }

    /// Weighted time cost `C = w_time * rarv_time`.
    pub fn time_cost(&self) -> f64 {
        self.w_time * self.rarv_time
    }

    pub fn check_stage(&self, stage: usize) -> Result<()> {
        if stage == 0 || stage > self.horizon {
            Err(Error::StageOutOfRange {
                stage,
                horizon: self.horizon,
            })
        } else {
            Ok(())
        }
    }

    /// Trust-gain weight `w_trust * sqrt(horizon - stage)`; zero at the last stage.
    pub fn trust_gain(&self, stage: usize) -> Result<f64> {
        self.check_stage(stage)?;
        Ok(self.w_trust * ((self.horizon - stage) as f64).sqrt())
    }
}

/// Immediate task reward (costs only) of executing `action`.
pub fn task_reward(action: Action, threat: bool, cfg: &RewardConfig) -> f64 {
    match action {
        Action::UseRarv => -cfg.time_cost(),
        Action::NoRarv if threat => -cfg.health_cost(),
        Action::NoRarv => 0.0,
    }
}

/// Success iff following `recommendation` pays strictly more than defying it.
/// The trust-gain term is left out of the comparison.
pub fn performance(recommendation: Action, threat: bool, cfg: &RewardConfig) -> Performance {
    let follow = task_reward(recommendation, threat, cfg);
    let defy = task_reward(recommendation.opposite(), threat, cfg);
    Performance::from_bool(follow > defy)
}

/// Realized reward at `stage`: costs of the executed action plus the
/// trust-gain bonus when the agent performed well.
pub fn realized_reward(
    executed: Action,
    threat: bool,
    p: Performance,
    stage: usize,
    cfg: &RewardConfig,
) -> Result<f64> {
    let gain = cfg.trust_gain(stage)?;
    let bonus = if p.is_success() { gain } else { 0.0 };
    Ok(task_reward(executed, threat, cfg) + bonus)
}

/// Trust means after each successive update from `(alpha0, beta0)`.
pub fn predict_trajectory(params: &TrustParams, performances: &[Performance]) -> Vec<f64> {
    let (mut s, mut f) = (0usize, 0usize);
    performances
        .iter()
        .map(|p| {
            match p {
                Performance::Success => s += 1,
                Performance::Failure => f += 1,
            }
            params.state_after(s, f).mean()
        })
        .collect()
}

/// Root mean squared error between two equal-length, nonempty sequences.
pub fn rmse(predicted: &[f64], reported: &[f64]) -> Result<f64> {
    if predicted.len() != reported.len() {
        return Err(Error::invalid(format!(
            "rmse length mismatch: {} predictions vs {} reports",
            predicted.len(),
            reported.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("rmse of empty sequences"));
    }
    let sse: f64 = predicted
        .iter()
        .zip(reported)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// A reported trust value at a given site (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSample {
    pub stage: usize,
    pub reported_trust: f64,
}

impl FeedbackSample {
    pub fn new(stage: usize, reported_trust: f64) -> Result<Self> {
        if stage == 0 {
            return Err(Error::invalid("feedback stage is 1-based"));
        }
        if !(0.0..=1.0).contains(&reported_trust) {
            return Err(Error::invalid(format!(
                "reported trust must lie in [0, 1], got {reported_trust}"
            )));
        }
        Ok(FeedbackSample {
            stage,
            reported_trust,
        })
    }

    /// From a 0..=100 slider position.
    pub fn from_slider(stage: usize, slider: u8) -> Result<Self> {
        if slider > 100 {
            return Err(Error::invalid(format!("slider must be 0..=100, got {slider}")));
        }
        FeedbackSample::new(stage, f64::from(slider) / 100.0)
    }

    pub fn clamped(&self) -> f64 {
        clamp_trust(self.reported_trust)
    }
}

pub fn clamp_trust(t: f64) -> f64 {
    t.clamp(FEEDBACK_FLOOR, FEEDBACK_CEIL)
}
