//! Live session state machine.
//!
//! Every mutation is expressed as a list of [`EventKind`]s decided against
//! the current state and then applied through [`Session::apply`], the same
//! function used for replay, so a persisted event list always folds back
//! into the exact in-memory state.

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::fit::fit_params;
use crate::model::{
    performance, rmse, task_reward, Action, FeedbackSample, Performance, RewardConfig, TrustParams,
    TrustState,
};
use crate::planner::{recommend, PlanningProblem};
use crate::sim::{
    generate_scenario, replay_state, EpisodeHeader, EpisodeLog, EpisodeTotals, EstimatorSettings,
    InteractionRecord, PlannerSettings, Scenario, ScenarioSummary, EPISODE_SCHEMA,
};

pub const DEFAULT_SITES: usize = 100;
pub const DEFAULT_THREAT_PROB: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Briefing,
    AwaitingChoice,
    AwaitingTrust,
    Complete,
}

/// Body of a create request. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub n_sites: usize,
    pub threat_prob: f64,
    /// Scenario seed; drawn at random when absent.
    pub seed: Option<u64>,
    pub reward: RewardConfig,
    pub planner: PlannerSettings,
    pub estimator: EstimatorSettings,
    /// Explicit scenario; overrides `n_sites`, `threat_prob`, `seed` and
    /// `reward`.
    pub scenario: Option<Scenario>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            n_sites: DEFAULT_SITES,
            threat_prob: DEFAULT_THREAT_PROB,
            seed: None,
            reward: RewardConfig::default(),
            planner: PlannerSettings::default(),
            // live sessions refit after every report
            estimator: EstimatorSettings {
                refit_every: 1,
                ..EstimatorSettings::default()
            },
            scenario: None,
        }
    }
}

impl SessionConfig {
    pub fn resolve_scenario(&self, random_seed: u64) -> crate::Result<Scenario> {
        let scenario = match &self.scenario {
            Some(s) => s.clone(),
            None => generate_scenario(
                self.n_sites,
                self.threat_prob,
                self.seed.unwrap_or(random_seed),
                self.reward,
            )?,
        };
        scenario.validate()?;
        self.planner.threat_priors(&scenario)?;
        self.estimator.init.validate()?;
        Ok(scenario)
    }
}

/// Which of the four threat × action cells a site ended in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeCell {
    /// RARV sent, threat present: protected.
    ThreatNeutralized,
    /// RARV sent, no threat: time lost.
    RarvUnneeded,
    /// No RARV, threat present: health lost.
    ThreatHit,
    /// No RARV, no threat: no cost.
    Clear,
}

impl OutcomeCell {
    pub fn of(action: Action, threat: bool) -> Self {
        match (action, threat) {
            (Action::UseRarv, true) => OutcomeCell::ThreatNeutralized,
            (Action::UseRarv, false) => OutcomeCell::RarvUnneeded,
            (Action::NoRarv, true) => OutcomeCell::ThreatHit,
            (Action::NoRarv, false) => OutcomeCell::Clear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub task_reward: f64,
    pub trust_gain: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub stage: usize,
    pub action: Action,
    pub recommendation: Action,
    pub threat_present: bool,
    pub outcome: OutcomeCell,
    pub performance: Performance,
    pub reward: RewardBreakdown,
    pub health: f64,
    pub elapsed_time: f64,
}

/// Event payloads. On the wire: `{"seq", "timestamp", "kind", "payload"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    Created {
        session_id: String,
        scenario: Box<Scenario>,
        planner: PlannerSettings,
        estimator: EstimatorSettings,
    },
    RecommendationIssued {
        stage: usize,
        recommendation: Action,
        expected_value: f64,
    },
    ChoiceSubmitted {
        stage: usize,
        action: Action,
    },
    OutcomeResolved(Outcome),
    TrustReported {
        stage: usize,
        slider: u8,
        reported_trust: f64,
        /// Estimate for this site made before the report arrived.
        predicted_trust: f64,
        estimated_state: TrustState,
    },
    ParamsRefitted {
        stage: usize,
        params: TrustParams,
        estimated_state: TrustState,
    },
    Completed {
        totals: EpisodeTotals,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub timestamp: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// The recommendation outstanding for the current site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingSite {
    pub recommendation: Action,
    pub expected_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub scenario: Scenario,
    pub planner: PlannerSettings,
    pub estimator: EstimatorSettings,
    /// Site being played, `1..=N`; `N + 1` once complete.
    pub current_stage: usize,
    pub estimated_state: TrustState,
    pub fitted_params: TrustParams,
    pub health: f64,
    pub elapsed_time: f64,
    pub status: Status,
    pub pending: Option<PendingSite>,
    /// Resolved sites; the last one lacks feedback while awaiting trust.
    pub records: Vec<InteractionRecord>,
    pub next_seq: u64,
}

/// What the client sees for the current site. Never includes the threat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteView {
    pub session_id: String,
    pub status: Status,
    pub stage: usize,
    pub n_sites: usize,
    pub recommendation: Action,
    pub health: f64,
    pub elapsed_time: f64,
    pub trust_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Next {
    Stage(usize),
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustAck {
    pub stage: usize,
    pub reported_trust: f64,
    pub trust_estimate: f64,
    pub refitted: bool,
    pub next: Next,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub status: Status,
    pub current_stage: usize,
    pub n_sites: usize,
    pub health: f64,
    pub elapsed_time: f64,
    pub trust_estimate: f64,
    pub estimated_state: TrustState,
    pub fitted_params: TrustParams,
    pub totals: EpisodeTotals,
    pub records: Vec<InteractionRecord>,
    /// RMSE of the online predictions; set once complete.
    pub e_rms: Option<f64>,
}

fn conflict(msg: impl Into<String>) -> ServiceError {
    ServiceError::Conflict(msg.into())
}

fn corrupt(msg: impl Into<String>) -> ServiceError {
    ServiceError::Internal(format!("inconsistent event: {}", msg.into()))
}

impl Session {
    /// The first event of a new session.
    pub fn created_event(
        session_id: &str,
        config: &SessionConfig,
        random_seed: u64,
    ) -> crate::Result<EventKind> {
        Ok(EventKind::Created {
            session_id: session_id.to_string(),
            scenario: Box::new(config.resolve_scenario(random_seed)?),
            planner: config.planner,
            estimator: config.estimator,
        })
    }

    fn from_created(ev: &SessionEvent) -> Result<Session, ServiceError> {
        let EventKind::Created { session_id, scenario, planner, estimator } = &ev.kind else {
            return Err(corrupt("first event must be Created"));
        };
        if ev.seq != 0 {
            return Err(corrupt(format!("Created has sequence {}", ev.seq)));
        }
        let fitted_params = estimator.init;
        Ok(Session {
            session_id: session_id.clone(),
            scenario: (**scenario).clone(),
            planner: *planner,
            estimator: *estimator,
            current_stage: 1,
            estimated_state: fitted_params.initial_state(),
            fitted_params,
            health: scenario.initial_health,
            elapsed_time: 0.0,
            status: Status::Briefing,
            pending: None,
            records: Vec::new(),
            next_seq: 1,
        })
    }

    /// Folds a complete event list into a session.
    pub fn replay(events: &[SessionEvent]) -> Result<Session, ServiceError> {
        let (first, rest) = events.split_first().ok_or_else(|| corrupt("empty event list"))?;
        let mut s = Session::from_created(first)?;
        for ev in rest {
            s.apply(ev)?;
        }
        Ok(s)
    }

    pub fn n_sites(&self) -> usize {
        self.scenario.horizon()
    }

    fn cfg(&self) -> &RewardConfig {
        &self.scenario.cfg
    }

    fn expect_stage(&self, stage: usize) -> Result<(), ServiceError> {
        if stage != self.current_stage {
            return Err(corrupt(format!("event for site {stage} while at site {}", self.current_stage)));
        }
        Ok(())
    }

    /// Applies one event, checking that it is legal in the current state.
    pub fn apply(&mut self, ev: &SessionEvent) -> Result<(), ServiceError> {
        if ev.seq != self.next_seq {
            return Err(corrupt(format!("sequence {} where {} was expected", ev.seq, self.next_seq)));
        }
        match &ev.kind {
            EventKind::Created { .. } => return Err(corrupt("duplicate Created")),
            EventKind::RecommendationIssued { stage, recommendation, expected_value } => {
                self.expect_stage(*stage)?;
                if !matches!(self.status, Status::Briefing | Status::AwaitingChoice) || self.pending.is_some() {
                    return Err(corrupt("recommendation issued out of turn"));
                }
                self.pending = Some(PendingSite {
                    recommendation: *recommendation,
                    expected_value: *expected_value,
                });
                self.status = Status::AwaitingChoice;
            }
            EventKind::ChoiceSubmitted { stage, .. } => {
                self.expect_stage(*stage)?;
                if self.status != Status::AwaitingChoice || self.pending.is_none() {
                    return Err(corrupt("choice submitted out of turn"));
                }
            }
            EventKind::OutcomeResolved(o) => {
                self.expect_stage(o.stage)?;
                let pending = self.pending.take().ok_or_else(|| corrupt("outcome without recommendation"))?;
                if self.status != Status::AwaitingChoice || pending.recommendation != o.recommendation {
                    return Err(corrupt("outcome out of turn"));
                }
                self.health = o.health;
                self.elapsed_time = o.elapsed_time;
                self.records.push(InteractionRecord {
                    stage: o.stage,
                    recommendation: o.recommendation,
                    human_action: o.action,
                    threat_present: o.threat_present,
                    performance: o.performance,
                    realized_reward: o.reward.total,
                    health_after: o.health,
                    elapsed_time_after: o.elapsed_time,
                    trust_feedback: None,
                    predicted_trust: None,
                });
                self.status = Status::AwaitingTrust;
            }
            EventKind::TrustReported { stage, reported_trust, predicted_trust, estimated_state, .. } => {
                self.expect_stage(*stage)?;
                if self.status != Status::AwaitingTrust {
                    return Err(corrupt("trust reported out of turn"));
                }
                let rec = self.records.last_mut().ok_or_else(|| corrupt("trust without a site"))?;
                rec.trust_feedback = Some(*reported_trust);
                rec.predicted_trust = Some(*predicted_trust);
                self.estimated_state = *estimated_state;
                self.current_stage += 1;
                if *stage < self.n_sites() {
                    self.status = Status::AwaitingChoice;
                }
            }
            EventKind::ParamsRefitted { stage, params, estimated_state } => {
                if *stage + 1 != self.current_stage || self.status != Status::AwaitingChoice {
                    return Err(corrupt("refit out of turn"));
                }
                self.fitted_params = *params;
                self.estimated_state = *estimated_state;
            }
            EventKind::Completed { .. } => {
                if self.status != Status::AwaitingTrust || self.current_stage != self.n_sites() + 1 {
                    return Err(corrupt("completed before the last report"));
                }
                self.status = Status::Complete;
            }
        }
        self.next_seq += 1;
        Ok(())
    }

    pub fn site_view(&self) -> Option<SiteView> {
        let p = self.pending?;
        Some(SiteView {
            session_id: self.session_id.clone(),
            status: self.status,
            stage: self.current_stage,
            n_sites: self.n_sites(),
            recommendation: p.recommendation,
            health: self.health,
            elapsed_time: self.elapsed_time,
            trust_estimate: self.estimated_state.mean(),
        })
    }

    /// Events for a site request: none if a recommendation is outstanding.
    pub fn decide_site(&self) -> Result<Vec<EventKind>, ServiceError> {
        match self.status {
            Status::AwaitingTrust => {
                return Err(conflict(format!(
                    "site {} awaits a trust report",
                    self.current_stage
                )))
            }
            Status::Complete => return Err(conflict("session is complete")),
            Status::Briefing | Status::AwaitingChoice => {}
        }
        if self.pending.is_some() {
            return Ok(Vec::new());
        }
        let prob = PlanningProblem {
            params: self.fitted_params,
            cfg: *self.cfg(),
            start_stage: self.current_stage,
            start_state: self.estimated_state,
            threat_priors: self.planner.threat_priors(&self.scenario)?,
        };
        let (recommendation, expected_value) = recommend(&prob)?;
        Ok(vec![EventKind::RecommendationIssued {
            stage: self.current_stage,
            recommendation,
            expected_value,
        }])
    }

    pub fn decide_choice(&self, action: Action) -> Result<Vec<EventKind>, ServiceError> {
        let pending = match (self.status, self.pending) {
            (Status::AwaitingChoice, Some(p)) => p,
            (Status::Briefing | Status::AwaitingChoice, None) => {
                return Err(conflict(format!(
                    "no recommendation issued for site {}; request the site first",
                    self.current_stage
                )))
            }
            (Status::AwaitingTrust, _) => {
                return Err(conflict(format!(
                    "choice for site {} already submitted",
                    self.current_stage
                )))
            }
            _ => return Err(conflict("session is complete")),
        };
        let stage = self.current_stage;
        let cfg = self.cfg();
        let threat = self.scenario.sites[stage - 1].threat_present;
        let p = performance(pending.recommendation, threat, cfg);
        let task = task_reward(action, threat, cfg);
        let gain = if p.is_success() { cfg.trust_gain(stage)? } else { 0.0 };
        let mut health = self.health;
        let mut elapsed = self.elapsed_time + self.scenario.base_site_time;
        if action == Action::NoRarv && threat {
            health -= cfg.health_loss;
        }
        if action == Action::UseRarv {
            elapsed += cfg.rarv_time;
        }
        Ok(vec![
            EventKind::ChoiceSubmitted { stage, action },
            EventKind::OutcomeResolved(Outcome {
                stage,
                action,
                recommendation: pending.recommendation,
                threat_present: threat,
                outcome: OutcomeCell::of(action, threat),
                performance: p,
                reward: RewardBreakdown {
                    task_reward: task,
                    trust_gain: gain,
                    total: task + gain,
                },
                health,
                elapsed_time: elapsed,
            }),
        ])
    }

    pub fn decide_trust(&self, slider: i64) -> Result<Vec<EventKind>, ServiceError> {
        let slider = u8::try_from(slider)
            .ok()
            .filter(|s| *s <= 100)
            .ok_or_else(|| ServiceError::Invalid(format!("slider {slider} outside 0..=100")))?;
        if self.status != Status::AwaitingTrust {
            return Err(conflict(match self.status {
                Status::Complete => "session is complete".to_string(),
                _ => format!("no choice submitted yet for site {}", self.current_stage),
            }));
        }
        let stage = self.current_stage;
        let n = self.n_sites();
        let last = self.records.last().expect("awaiting trust implies a record");
        let state = self.estimated_state.update(last.performance, &self.fitted_params);
        let reported = FeedbackSample::from_slider(stage, slider)?;
        let mut events = vec![EventKind::TrustReported {
            stage,
            slider,
            reported_trust: reported.reported_trust,
            predicted_trust: state.mean(),
            estimated_state: state,
        }];

        let every = self.estimator.refit_every;
        if every > 0 && stage.is_multiple_of(every) && stage < n {
            let mut feedback: Vec<FeedbackSample> = self.records[..stage - 1]
                .iter()
                .map(|r| FeedbackSample::new(r.stage, r.trust_feedback.expect("earlier sites have feedback")))
                .collect::<crate::Result<_>>()?;
            feedback.push(reported);
            let perfs: Vec<Performance> = self.records.iter().map(|r| r.performance).collect();
            let params = fit_params(&feedback, &perfs, &self.fitted_params, &self.estimator.fit)?;
            events.push(EventKind::ParamsRefitted {
                stage,
                params,
                estimated_state: replay_state(&params, &perfs),
            });
        }
        if stage == n {
            let mut records = self.records.clone();
            let rec = records.last_mut().expect("nonempty");
            rec.trust_feedback = Some(reported.reported_trust);
            rec.predicted_trust = Some(state.mean());
            events.push(EventKind::Completed {
                totals: EpisodeTotals::recompute(&ScenarioSummary::of(&self.scenario), &records)?,
            });
        }
        Ok(events)
    }

    pub fn trust_ack(&self, stage: usize, refitted: bool) -> TrustAck {
        let rec = &self.records[stage - 1];
        TrustAck {
            stage,
            reported_trust: rec.trust_feedback.unwrap_or(f64::NAN),
            trust_estimate: self.estimated_state.mean(),
            refitted,
            next: if self.status == Status::Complete {
                Next::Complete
            } else {
                Next::Stage(self.current_stage)
            },
        }
    }

    pub fn last_outcome(&self) -> Option<Outcome> {
        let r = self.records.last()?;
        let cfg = self.cfg();
        let task = task_reward(r.human_action, r.threat_present, cfg);
        Some(Outcome {
            stage: r.stage,
            action: r.human_action,
            recommendation: r.recommendation,
            threat_present: r.threat_present,
            outcome: OutcomeCell::of(r.human_action, r.threat_present),
            performance: r.performance,
            reward: RewardBreakdown {
                task_reward: task,
                trust_gain: r.realized_reward - task,
                total: r.realized_reward,
            },
            health: r.health_after,
            elapsed_time: r.elapsed_time_after,
        })
    }

    pub fn summary(&self) -> crate::Result<SessionSummary> {
        let totals = EpisodeTotals::recompute(&ScenarioSummary::of(&self.scenario), &self.records)?;
        let e_rms = if self.status == Status::Complete {
            let (p, f): (Vec<f64>, Vec<f64>) = self
                .records
                .iter()
                .filter_map(|r| Some((r.predicted_trust?, r.trust_feedback?)))
                .unzip();
            Some(rmse(&p, &f)?)
        } else {
            None
        };
        Ok(SessionSummary {
            session_id: self.session_id.clone(),
            status: self.status,
            current_stage: self.current_stage,
            n_sites: self.n_sites(),
            health: self.health,
            elapsed_time: self.elapsed_time,
            trust_estimate: self.estimated_state.mean(),
            estimated_state: self.estimated_state,
            fitted_params: self.fitted_params,
            totals,
            records: self.records.clone(),
            e_rms,
        })
    }

    /// The completed interaction history in the simulator's log format.
    pub fn to_episode_log(&self) -> crate::Result<EpisodeLog> {
        let header = EpisodeHeader {
            schema: EPISODE_SCHEMA.to_string(),
            participant_id: self.session_id.clone(),
            archetype: None,
            scenario: ScenarioSummary::of(&self.scenario),
            human: None,
            planner: self.planner,
            estimator: self.estimator,
        };
        EpisodeLog::from_records(header, self.records.clone())
    }
}
