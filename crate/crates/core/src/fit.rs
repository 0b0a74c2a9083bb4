//! Online least-squares fitting of personalized trust parameters.
//!
//! The loss is the sum of squared differences between the model's trust mean
//! after each feedback stage and the (clamped) reported trust. It is
//! minimized by projected gradient descent with a backtracking step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeedbackSample, Performance, TrustParams};

/// Step-rule settings for [`fit_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub learning_rate: f64,
    pub max_halvings: u32,
    pub max_iterations: u32,
    pub gradient_tolerance: f64,
    /// Cap on the step size; each iteration starts backtracking from twice
    /// the previously accepted step, up to this value.
    pub max_step: f64,
    /// Every parameter is projected to `[floor, inf)` after each step.
    pub floor: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            learning_rate: 0.05,
            max_step: 1e4,
            max_halvings: 20,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            floor: 0.01,
        }
    }
}

/// Feedback targets paired with success/failure counts through their stage.
struct Targets {
    counts: Vec<(f64, f64)>,
    reported: Vec<f64>,
}

impl Targets {
    fn build(feedback: &[FeedbackSample], performances: &[Performance]) -> Result<Targets> {
        if feedback.is_empty() {
            return Err(Error::Precondition("fitting needs at least one feedback sample".into()));
        }
        let mut last = 0usize;
        for fb in feedback {
            if fb.stage <= last {
                return Err(Error::invalid(format!(
                    "feedback stages must be strictly increasing (stage {} after {last})",
                    fb.stage
                )));
            }
            last = fb.stage;
        }
        if last > performances.len() {
            return Err(Error::invalid(format!(
                "feedback at stage {last} but only {} performances known",
                performances.len()
            )));
        }

        let mut counts = Vec::with_capacity(feedback.len());
        let (mut s, mut f) = (0usize, 0usize);
        let mut next = feedback.iter().peekable();
        for (i, p) in performances.iter().take(last).enumerate() {
            match p {
                Performance::Success => s += 1,
                Performance::Failure => f += 1,
            }
            if next.peek().is_some_and(|fb| fb.stage == i + 1) {
                counts.push((s as f64, f as f64));
                next.next();
            }
        }
        Ok(Targets {
            counts,
            reported: feedback.iter().map(FeedbackSample::clamped).collect(),
        })
    }

    fn loss(&self, p: &TrustParams) -> f64 {
        self.counts
            .iter()
            .zip(&self.reported)
            .map(|(&(s, f), y)| {
                let a = p.alpha0 + s * p.w_success;
                let b = p.beta0 + f * p.w_failure;
                let r = a / (a + b) - y;
                r * r
            })
            .sum()
    }

    fn gradient(&self, p: &TrustParams) -> [f64; 4] {
        let mut g = [0.0; 4];
        for (&(s, f), y) in self.counts.iter().zip(&self.reported) {
            let a = p.alpha0 + s * p.w_success;
            let b = p.beta0 + f * p.w_failure;
            let n = a + b;
            let resid = a / n - y;
            // d mean / d a = b / n^2, d mean / d b = -a / n^2
            let da = 2.0 * resid * b / (n * n);
            let db = -2.0 * resid * a / (n * n);
            g[0] += da;
            g[1] += db;
            g[2] += da * s;
            g[3] += db * f;
        }
        g
    }
}

/// Squared-error loss of `params` against the feedback.
pub fn loss(
    params: &TrustParams,
    feedback: &[FeedbackSample],
    performances: &[Performance],
) -> Result<f64> {
    Ok(Targets::build(feedback, performances)?.loss(params))
}

/// Analytic gradient of [`loss`] with respect to
/// `(alpha0, beta0, w_success, w_failure)`.
pub fn loss_gradient(
    params: &TrustParams,
    feedback: &[FeedbackSample],
    performances: &[Performance],
) -> Result<[f64; 4]> {
    Ok(Targets::build(feedback, performances)?.gradient(params))
}

/// Outcome of a fit, with convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: TrustParams,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Fits parameters to the feedback seen so far, starting from `init`.
pub fn fit_params(
    feedback: &[FeedbackSample],
    performances: &[Performance],
    init: &TrustParams,
    settings: &FitSettings,
) -> Result<TrustParams> {
    fit_params_report(feedback, performances, init, settings).map(|r| r.params)
}

pub fn fit_params_report(
    feedback: &[FeedbackSample],
    performances: &[Performance],
    init: &TrustParams,
    settings: &FitSettings,
) -> Result<FitReport> {
    init.validate()?;
    if !(settings.learning_rate > 0.0 && settings.floor > 0.0) {
        return Err(Error::invalid("learning rate and floor must be positive"));
    }
    let targets = Targets::build(feedback, performances)?;
    let project = |v: [f64; 4]| v.map(|x| x.max(settings.floor));

    let mut theta = TrustParams::from_array(project(init.to_array()));
    let mut current = targets.loss(&theta);
    // Projecting the initial point can only be needed when init sits below
    // the floor; never return something worse than init itself.
    let init_loss = targets.loss(init);
    if current > init_loss {
        theta = *init;
        current = init_loss;
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut step = settings.learning_rate;
    let min_step = settings.learning_rate * 0.5f64.powi(settings.max_halvings as i32);
    while iterations < settings.max_iterations {
        let g = targets.gradient(&theta);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < settings.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let base = theta.to_array();
        let mut lr = step;
        let mut accepted = None;
        while lr >= min_step {
            let cand = TrustParams::from_array(project([
                base[0] - lr * g[0],
                base[1] - lr * g[1],
                base[2] - lr * g[2],
                base[3] - lr * g[3],
            ]));
            let l = targets.loss(&cand);
            if l <= current {
                accepted = Some((cand, l));
                break;
            }
            lr *= 0.5;
        }
        match accepted {
            Some((cand, l)) => {
                let stalled = cand == theta;
                step = (2.0 * lr).min(settings.max_step);
                theta = cand;
                current = l;
                if stalled {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }

    Ok(FitReport {
        params: theta,
        initial_loss: init_loss,
        final_loss: current,
        iterations,
        converged,
    })
}
