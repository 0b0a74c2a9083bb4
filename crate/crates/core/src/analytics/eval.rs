//! Online prediction protocol and per-participant trust features.

use serde::{Deserialize, Serialize};

use crate::archetype::Archetype;
use crate::error::{Error, Result};
use crate::fit::{fit_params, FitSettings};
use crate::model::{rmse, FeedbackSample, Performance, TrustParams, FEEDBACK_FLOOR};

pub const DEFAULT_TRAIN_LEN: usize = 20;
pub const DEFAULT_REFIT_EVERY: usize = 5;

/// One participant's per-site performance and reported trust.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSeries {
    pub participant_id: String,
    pub feedback: Vec<FeedbackSample>,
    pub performances: Vec<Performance>,
    /// Known generating archetype (simulated data only).
    #[serde(default)]
    pub archetype: Option<Archetype>,
}

impl ParticipantSeries {
    pub fn new(
        participant_id: impl Into<String>,
        feedback: Vec<FeedbackSample>,
        performances: Vec<Performance>,
    ) -> Result<Self> {
        let s = ParticipantSeries {
            participant_id: participant_id.into(),
            feedback,
            performances,
            archetype: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feedback.len() != self.performances.len() {
            return Err(Error::invalid(format!(
                "participant {}: {} feedback samples for {} sites",
                self.participant_id,
                self.feedback.len(),
                self.performances.len()
            )));
        }
        if let Some((i, _)) = self
            .feedback
            .iter()
            .enumerate()
            .find(|(i, fb)| fb.stage != i + 1)
        {
            return Err(Error::invalid(format!(
                "participant {}: feedback {} is not for site {}",
                self.participant_id,
                i + 1,
                i + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.performances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.performances.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub init: TrustParams,
    pub train_len: usize,
    pub refit_every: usize,
    pub fit: FitSettings,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            init: TrustParams::default(),
            train_len: DEFAULT_TRAIN_LEN,
            refit_every: DEFAULT_REFIT_EVERY,
            fit: FitSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineEval {
    pub e_rms: f64,
    /// Predictions for sites `train_len + 1 ..= len`, in order.
    pub predictions: Vec<f64>,
    pub final_params: TrustParams,
}

/// Fits on the first `train_len` reports, then predicts each later site
/// before seeing its report, refitting on everything seen so far after
/// every `refit_every` sites (0 disables refitting).
pub fn online_eval(series: &ParticipantSeries, settings: &EvalSettings) -> Result<OnlineEval> {
    series.validate()?;
    let n = series.len();
    let train = settings.train_len;
    if train == 0 || n <= train {
        return Err(Error::invalid(format!(
            "participant {}: {n} sites is too short for {train} training sites",
            series.participant_id
        )));
    }
    let fb = &series.feedback;
    let perf = &series.performances;
    let mut params = fit_params(&fb[..train], &perf[..train], &settings.init, &settings.fit)?;

    let mut s = perf[..train].iter().filter(|p| p.is_success()).count();
    let mut f = train - s;
    let mut predictions = Vec::with_capacity(n - train);
    for j in train..n {
        match perf[j] {
            Performance::Success => s += 1,
            Performance::Failure => f += 1,
        }
        predictions.push(params.state_after(s, f).mean());
        let seen = j + 1;
        if settings.refit_every > 0 && (seen - train).is_multiple_of(settings.refit_every) && seen < n {
            params = fit_params(&fb[..seen], &perf[..seen], &params, &settings.fit)?;
        }
    }
    let reported: Vec<f64> = fb[train..].iter().map(|x| x.reported_trust).collect();
    Ok(OnlineEval {
        e_rms: rmse(&predictions, &reported)?,
        predictions,
        final_params: params,
    })
}

/// Runs [`online_eval`] for every participant in parallel; results are in
/// input order.
pub fn evaluate_population(
    series: &[ParticipantSeries],
    settings: &EvalSettings,
) -> Result<Vec<OnlineEval>> {
    use rayon::prelude::*;
    series.par_iter().map(|s| online_eval(s, settings)).collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Clustering features of one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustFeatures {
    pub e_rms: f64,
    /// Mean of `ln` of the clamped reported trust over all sites.
    pub mean_log_trust: f64,
}

pub fn mean_log_trust(feedback: &[FeedbackSample]) -> f64 {
    feedback.iter().map(|f| f.clamped().ln()).sum::<f64>() / feedback.len() as f64
}

pub fn extract_features(series: &ParticipantSeries, eval: &OnlineEval) -> TrustFeatures {
    TrustFeatures {
        e_rms: eval.e_rms,
        mean_log_trust: if series.feedback.is_empty() {
            FEEDBACK_FLOOR.ln()
        } else {
            mean_log_trust(&series.feedback)
        },
    }
}
