//! Seeded mission simulator.
//!
//! A scenario fixes the ground-truth threat at every site. An episode pairs
//! the planner, which recommends from the agent's *estimated* trust state,
//! with a simulated human whose *true* trust evolves under its own
//! parameters. Randomness comes from two ChaCha8 streams: one for scenario
//! generation and one for human behavior (compliance draws and feedback
//! noise), so either can be varied independently.

mod log;
pub mod population;

pub use log::{
    read_episode_log, read_interactions_csv, write_episode_log, write_interactions_csv,
    EpisodeHeader, EpisodeLog, EpisodeTotals, InteractionRecord, InteractionRow, ScenarioSummary,
    EPISODE_SCHEMA,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_params, FitSettings};
use crate::model::{
    performance, realized_reward, Action, FeedbackSample, Performance, RewardConfig, TrustParams,
    TrustState,
};
use crate::planner::{solve, PlanningProblem, PolicyTable};

/// Starting health of the soldier.
pub const INITIAL_HEALTH: f64 = 100.0;

const SCENARIO_STREAM: u64 = 0;
const BEHAVIOR_STREAM: u64 = 1;

/// Seeded generator for one of the simulator's named streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; derives independent child seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub threat_present: bool,
    /// The planner's belief that this site holds a threat.
    pub threat_prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub sites: Vec<Site>,
    pub cfg: RewardConfig,
    pub seed: u64,
    pub threat_prob: f64,
    #[serde(default = "default_health")]
    pub initial_health: f64,
    /// Fixed traversal time charged at every site, on top of RARV time.
    #[serde(default)]
    pub base_site_time: f64,
}

fn default_health() -> f64 {
    INITIAL_HEALTH
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.sites.len()
    }

    pub fn threat_priors(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.threat_prior).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.sites.len() != self.cfg.horizon {
            return Err(Error::invalid(format!(
                "scenario has {} sites but horizon {}",
                self.sites.len(),
                self.cfg.horizon
            )));
        }
        if let Some(i) = self.sites.iter().position(|s| !(0.0..=1.0).contains(&s.threat_prior)) {
            return Err(Error::invalid(format!("site {} threat prior outside [0, 1]", i + 1)));
        }
        if !self.initial_health.is_finite() || !self.base_site_time.is_finite() || self.base_site_time < 0.0 {
            return Err(Error::invalid("initial health and base site time must be finite, site time >= 0"));
        }
        Ok(())
    }
}

/// Draws each site's threat independently with probability `threat_prob`.
///
/// The reward configuration's horizon is set to `n_sites`.
pub fn generate_scenario(
    n_sites: usize,
    threat_prob: f64,
    seed: u64,
    cfg: RewardConfig,
) -> Result<Scenario> {
    if n_sites == 0 {
        return Err(Error::invalid("a scenario needs at least one site"));
    }
    if !(0.0..=1.0).contains(&threat_prob) {
        return Err(Error::invalid(format!("threat probability {threat_prob} outside [0, 1]")));
    }
    let cfg = RewardConfig {
        horizon: n_sites,
        ..cfg
    };
    cfg.validate()?;
    let mut rng = stream_rng(seed, SCENARIO_STREAM);
    let sites = (0..n_sites)
        .map(|_| Site {
            threat_present: rng.random::<f64>() < threat_prob,
            threat_prior: threat_prob,
        })
        .collect();
    Ok(Scenario {
        sites,
        cfg,
        seed,
        threat_prob,
        initial_health: INITIAL_HEALTH,
        base_site_time: 0.0,
    })
}

/// A simulated participant following the reverse-psychology model: it
/// executes the recommendation with probability equal to its true trust
/// mean, the opposite action otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedHuman {
    pub true_params: TrustParams,
    /// Standard deviation of Gaussian noise on reported trust.
    pub feedback_noise_sd: f64,
    /// Seed of the behavior stream.
    pub seed: u64,
}

impl SimulatedHuman {
    pub fn validate(&self) -> Result<()> {
        self.true_params.validate()?;
        if !(self.feedback_noise_sd.is_finite() && self.feedback_noise_sd >= 0.0) {
            return Err(Error::invalid("feedback noise sd must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSettings {
    /// Replaces every site's threat prior in the planner's model.
    pub threat_prior_override: Option<f64>,
}

impl PlannerSettings {
    /// Per-site threat priors the planner should assume for `scenario`.
    pub fn threat_priors(&self, scenario: &Scenario) -> Result<Vec<f64>> {
        match self.threat_prior_override {
            Some(d) if (0.0..=1.0).contains(&d) => Ok(vec![d; scenario.horizon()]),
            Some(d) => Err(Error::invalid(format!("threat prior override {d} outside [0, 1]"))),
            None => Ok(scenario.threat_priors()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSettings {
    pub init: TrustParams,
    /// Refit after every `refit_every` sites; 0 disables refitting.
    pub refit_every: usize,
    pub fit: FitSettings,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            init: TrustParams::default(),
            refit_every: 5,
            fit: FitSettings::default(),
        }
    }
}

/// State reached by applying `performances` one update at a time.
pub fn replay_state(params: &TrustParams, performances: &[Performance]) -> TrustState {
    performances
        .iter()
        .fold(params.initial_state(), |s, p| s.update(*p, params))
}

/// Runs one episode end to end.
pub fn run_episode(
    participant_id: &str,
    scenario: &Scenario,
    human: &SimulatedHuman,
    planner: &PlannerSettings,
    estimator: &EstimatorSettings,
) -> Result<EpisodeLog> {
    scenario.validate()?;
    human.validate()?;
    estimator.init.validate()?;
    let cfg = scenario.cfg;
    let priors = planner.threat_priors(scenario)?;

    let mut rng = stream_rng(human.seed, BEHAVIOR_STREAM);
    let mut true_state = human.true_params.initial_state();
    let mut est_params = estimator.init;
    let mut est_state = est_params.initial_state();
    let mut performances = Vec::with_capacity(cfg.horizon);
    let mut feedback = Vec::with_capacity(cfg.horizon);
    let mut records = Vec::with_capacity(cfg.horizon);
    let mut health = scenario.initial_health;
    let mut elapsed = 0.0;
    // policy table plus the success count at the stage it was solved from
    let mut policy: Option<(PolicyTable, usize)> = None;
    let mut successes = 0usize;

    for (idx, site) in scenario.sites.iter().enumerate() {
        let stage = idx + 1;
        if policy.is_none() {
            let prob = PlanningProblem {
                params: est_params,
                cfg,
                start_stage: stage,
                start_state: est_state,
                threat_priors: priors.clone(),
            };
            policy = Some((solve(&prob)?, successes));
        }
        let (table, base) = policy.as_ref().expect("policy solved above");
        let recommendation = table
            .entry(stage, successes - base)
            .expect("lattice covers every reachable node")
            .action;

        let accepted = rng.random::<f64>() < true_state.mean();
        let human_action = if accepted {
            recommendation
        } else {
            recommendation.opposite()
        };
        let threat = site.threat_present;
        let p = performance(recommendation, threat, &cfg);
        let reward = realized_reward(human_action, threat, p, stage, &cfg)?;
        if human_action == Action::NoRarv && threat {
            health -= cfg.health_loss;
        }
        elapsed += scenario.base_site_time;
        if human_action == Action::UseRarv {
            elapsed += cfg.rarv_time;
        }

        performances.push(p);
        if p.is_success() {
            successes += 1;
        }
        true_state = true_state.update(p, &human.true_params);
        est_state = est_state.update(p, &est_params);
        let predicted = est_state.mean();
        let z: f64 = rng.sample(StandardNormal);
        let reported = (true_state.mean() + human.feedback_noise_sd * z).clamp(0.0, 1.0);
        feedback.push(FeedbackSample::new(stage, reported)?);

        records.push(InteractionRecord {
            stage,
            recommendation,
            human_action,
            threat_present: threat,
            performance: p,
            realized_reward: reward,
            health_after: health,
            elapsed_time_after: elapsed,
            trust_feedback: Some(reported),
            predicted_trust: Some(predicted),
        });

        if estimator.refit_every > 0 && stage % estimator.refit_every == 0 && stage < cfg.horizon {
            let refit = fit_params(&feedback, &performances, &est_params, &estimator.fit)?;
            if refit != est_params {
                est_params = refit;
                est_state = replay_state(&est_params, &performances);
                policy = None;
            }
        }
    }

    let header = EpisodeHeader {
        schema: EPISODE_SCHEMA.to_string(),
        participant_id: participant_id.to_string(),
        archetype: None,
        scenario: ScenarioSummary::of(scenario),
        human: Some(*human),
        planner: *planner,
        estimator: *estimator,
    };
    EpisodeLog::from_records(header, records)
}
