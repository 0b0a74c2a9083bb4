//! Finite-horizon value iteration over the reachable trust lattice.
//!
//! From a fixed start state the trust state after `j` further sites depends
//! only on how many of them were successes, so the planner works on the
//! lattice `(stage, successes)` with `j + 1` nodes at offset `j`. The human
//! follows a recommendation with probability equal to the current trust mean
//! and does the opposite otherwise. Whether a site counts as a success
//! depends only on the recommendation and the threat, never on the human's
//! choice, which keeps the transition independent of compliance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{performance, task_reward, Action, RewardConfig, TrustParams, TrustState};

/// Default per-site threat belief when none is configured.
pub const DEFAULT_THREAT_PRIOR: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningProblem {
    pub params: TrustParams,
    pub cfg: RewardConfig,
    /// First stage to plan for (1-based).
    pub start_stage: usize,
    pub start_state: TrustState,
    /// Planner's probability of a threat at each site; `horizon` entries.
    pub threat_priors: Vec<f64>,
}

impl PlanningProblem {
    /// A problem starting at stage 1 from the prior state, with a uniform
    /// threat belief.
    pub fn uniform(params: TrustParams, cfg: RewardConfig, threat_prior: f64) -> Self {
        PlanningProblem {
            params,
            cfg,
            start_stage: 1,
            start_state: params.initial_state(),
            threat_priors: vec![threat_prior; cfg.horizon],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.cfg.validate()?;
        self.cfg.check_stage(self.start_stage)?;
        if self.threat_priors.len() != self.cfg.horizon {
            return Err(Error::invalid(format!(
                "expected {} threat priors, got {}",
                self.cfg.horizon,
                self.threat_priors.len()
            )));
        }
        if let Some(d) = self.threat_priors.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::invalid(format!("threat prior {d} outside [0, 1]")));
        }
        Ok(())
    }

    fn prior(&self, stage: usize) -> Result<f64> {
        self.cfg.check_stage(stage)?;
        Ok(self.threat_priors[stage - 1])
    }
}

/// Expected one-stage reward and success probability of a recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub expected_reward: f64,
    pub success_prob: f64,
}

/// Expected reward of recommending `action` at `stage` from `state`,
/// marginalizing over the threat and the human's compliance.
pub fn expected_stage_outcome(
    action: Action,
    stage: usize,
    state: &TrustState,
    prob: &PlanningProblem,
) -> Result<StageOutcome> {
    let d = prob.prior(stage)?;
    let gain = prob.cfg.trust_gain(stage)?;
    Ok(stage_outcome(action, d, gain, state.mean(), &prob.cfg))
}

fn stage_outcome(action: Action, d: f64, gain: f64, trust: f64, cfg: &RewardConfig) -> StageOutcome {
    let cost = |threat: bool| {
        trust * task_reward(action, threat, cfg)
            + (1.0 - trust) * task_reward(action.opposite(), threat, cfg)
    };
    let success = |threat: bool| {
        if performance(action, threat, cfg).is_success() {
            1.0
        } else {
            0.0
        }
    };
    let task = d * cost(true) + (1.0 - d) * cost(false);
    let success_prob = d * success(true) + (1.0 - d) * success(false);
    StageOutcome {
        expected_reward: task + gain * success_prob,
        success_prob,
    }
}

/// Optimal choice and action values at one lattice node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub action: Action,
    pub value: f64,
    pub q_no_rarv: f64,
    pub q_use_rarv: f64,
}

impl PolicyEntry {
    pub fn q(&self, action: Action) -> f64 {
        match action {
            Action::NoRarv => self.q_no_rarv,
            Action::UseRarv => self.q_use_rarv,
        }
    }
}

/// Solved policy for stages `start_stage..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub start_stage: usize,
    pub horizon: usize,
    /// `entries[j][k]`: stage `start_stage + j` after `k` successes.
    entries: Vec<Vec<PolicyEntry>>,
}

impl PolicyTable {
    /// Entry for `stage` after `successes` successes since the start stage.
    pub fn entry(&self, stage: usize, successes: usize) -> Option<&PolicyEntry> {
        let offset = stage.checked_sub(self.start_stage)?;
        self.entries.get(offset)?.get(successes)
    }

    pub fn root(&self) -> &PolicyEntry {
        &self.entries[0][0]
    }

    /// Nodes at each stage offset, first stage first.
    pub fn stages(&self) -> impl Iterator<Item = &[PolicyEntry]> {
        self.entries.iter().map(Vec::as_slice)
    }
}

/// Backward induction from the horizon to the start stage.
pub fn solve(prob: &PlanningProblem) -> Result<PolicyTable> {
    prob.validate()?;
    let cfg = &prob.cfg;
    let stages = cfg.horizon - prob.start_stage + 1;

    let mut entries: Vec<Vec<PolicyEntry>> = Vec::with_capacity(stages);
    // Continuation values after the last stage are zero.
    let mut next = vec![0.0; stages + 1];
    for offset in (0..stages).rev() {
        let stage = prob.start_stage + offset;
        let d = prob.threat_priors[stage - 1];
        let gain = cfg.trust_gain(stage)?;
        let mut layer = Vec::with_capacity(offset + 1);
        for k in 0..=offset {
            let state = prob.start_state.advanced(k, offset - k, &prob.params);
            let trust = state.mean();
            let q = |a: Action| {
                let o = stage_outcome(a, d, gain, trust, cfg);
                o.expected_reward + o.success_prob * next[k + 1] + (1.0 - o.success_prob) * next[k]
            };
            let q_no = q(Action::NoRarv);
            let q_use = q(Action::UseRarv);
            let (action, value) = if q_use > q_no {
                (Action::UseRarv, q_use)
            } else {
                (Action::NoRarv, q_no)
            };
            layer.push(PolicyEntry {
                action,
                value,
                q_no_rarv: q_no,
                q_use_rarv: q_use,
            });
        }
        next = layer.iter().map(|e| e.value).collect();
        entries.push(layer);
    }
    entries.reverse();

    Ok(PolicyTable {
        start_stage: prob.start_stage,
        horizon: cfg.horizon,
        entries,
    })
}

/// Root action and value; ties go to `NoRarv`.
pub fn recommend(prob: &PlanningProblem) -> Result<(Action, f64)> {
    let table = solve(prob)?;
    let root = table.root();
    Ok((root.action, root.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(w_health: f64, w_time: f64, w_trust: f64, horizon: usize) -> RewardConfig {
        RewardConfig {
            w_health,
            w_time,
            w_trust,
            health_loss: 5.0,
            rarv_time: 10.0,
            horizon,
        }
    }

    /// Start state with mean 0.8.
    fn problem_08(horizon: usize, d: f64, w_trust: f64) -> PlanningProblem {
        let params = TrustParams::new(8.0, 2.0, 1.0, 1.0).unwrap();
        PlanningProblem::uniform(params, cfg(10.0, 1.0, w_trust, horizon), d)
    }

    #[test]
    fn stage_outcome_examples() {
        let prob = problem_08(1, 0.5, 0.0);
        let s = prob.start_state;
        let use_ = expected_stage_outcome(Action::UseRarv, 1, &s, &prob).unwrap();
        assert!((use_.expected_reward + 13.0).abs() < 1e-12);
        assert_eq!(use_.success_prob, 0.5);
        let no = expected_stage_outcome(Action::NoRarv, 1, &s, &prob).unwrap();
        assert!((no.expected_reward + 22.0).abs() < 1e-12);
        assert_eq!(no.success_prob, 0.5);
    }

    #[test]
    fn stage_outcome_pure_trust_gain() {
        let mut prob = problem_08(10, 0.0, 1.0);
        // mean as close to 1 as the open interval allows
        prob.start_state = TrustState::new(1e15, 1e-3).unwrap();
        let o = expected_stage_outcome(Action::NoRarv, 1, &prob.start_state, &prob).unwrap();
        assert_eq!(o.success_prob, 1.0);
        assert!((o.expected_reward - 3.0).abs() < 1e-9);
        assert!(expected_stage_outcome(Action::NoRarv, 11, &prob.start_state, &prob).is_err());
    }

    #[test]
    fn horizon_one_recommends_rarv() {
        let (a, v) = recommend(&problem_08(1, 0.5, 0.0)).unwrap();
        assert_eq!(a, Action::UseRarv);
        assert!((v + 13.0).abs() < 1e-12);
    }

    #[test]
    fn trust_only_with_certain_threat() {
        // H must exceed C for RARV to count as a success under threat; a
        // vanishing health weight keeps the task costs negligible.
        let params = TrustParams::default();
        let c = cfg(1e-12, 0.0, 1.5, 6);
        let prob = PlanningProblem::uniform(params, c, 1.0);
        let table = solve(&prob).unwrap();
        // the final stage carries no trust-gain weight, so only the
        // negligible task costs decide there
        for layer in table.stages().take(5) {
            assert!(layer.iter().all(|e| e.action == Action::UseRarv));
        }
        let total: f64 = (1..=6).map(|i| c.trust_gain(i).unwrap()).sum();
        assert!((table.root().value - total).abs() < 1e-9);
    }

    #[test]
    fn tie_goes_to_no_rarv() {
        // trust 0.5 with d = 0.5 and H = C makes both actions cost the same
        let params = TrustParams::default();
        let c = cfg(2.0, 1.0, 0.0, 1);
        let prob = PlanningProblem::uniform(params, c, 0.5);
        let root = *solve(&prob).unwrap().root();
        assert_eq!(root.q_no_rarv, root.q_use_rarv);
        assert_eq!(root.action, Action::NoRarv);
    }

    #[test]
    fn no_threat_no_trust_means_no_rarv() {
        let prob = PlanningProblem::uniform(TrustParams::default(), cfg(10.0, 1.0, 0.0, 20), 0.0);
        assert_eq!(recommend(&prob).unwrap().0, Action::NoRarv);
    }

    #[test]
    fn lattice_shape_and_states() {
        let prob = PlanningProblem {
            start_stage: 4,
            start_state: TrustState::new(3.5, 1.25).unwrap(),
            ..problem_08(9, 0.3, 1.0)
        };
        let table = solve(&prob).unwrap();
        let sizes: Vec<usize> = table.stages().map(<[PolicyEntry]>::len).collect();
        assert_eq!(sizes, vec![1, 2, 3, 4, 5, 6]);
        assert!(table.entry(3, 0).is_none());
        assert!(table.entry(9, 5).is_some());
        assert!(table.entry(9, 6).is_none());
        for layer in table.stages() {
            for e in layer {
                assert!(e.value.is_finite());
                assert_eq!(e.value, e.q_no_rarv.max(e.q_use_rarv));
            }
        }
    }

    #[test]
    fn value_monotone_in_trust_when_following_pays() {
        // d = 1 with H > C: following a RARV recommendation always beats
        // defying it. d = 0: following a breach recommendation always does.
        // Low-trust nodes may prefer the other recommendation, so only nodes
        // where the paying action is optimal are compared.
        for (d, paying) in [(0.0, Action::NoRarv), (1.0, Action::UseRarv)] {
            for params in [
                TrustParams::new(1.5, 2.5, 0.7, 1.3).unwrap(),
                TrustParams::new(12.0, 1.0, 1.0, 0.2).unwrap(),
            ] {
                let prob = PlanningProblem::uniform(params, cfg(10.0, 1.0, 0.0, 12), d);
                let table = solve(&prob).unwrap();
                let mut compared = 0;
                for layer in table.stages() {
                    for w in layer.windows(2) {
                        if w[0].action == paying && w[1].action == paying {
                            assert!(w[1].value >= w[0].value, "d={d}: {w:?}");
                            compared += 1;
                        }
                    }
                }
                assert!(compared > 0);
            }
        }
    }

    #[test]
    fn validation() {
        let mut prob = problem_08(5, 0.3, 1.0);
        prob.threat_priors.pop();
        assert!(solve(&prob).is_err());
        let mut prob = problem_08(5, 0.3, 1.0);
        prob.threat_priors[2] = 1.5;
        assert!(solve(&prob).is_err());
        let prob = PlanningProblem {
            start_stage: 6,
            ..problem_08(5, 0.3, 1.0)
        };
        assert!(solve(&prob).is_err());
    }

    #[test]
    fn solve_is_deterministic() {
        let prob = problem_08(40, 0.37, 0.8);
        let a = solve(&prob).unwrap();
        let b = solve(&prob).unwrap();
        let bits = |t: &PolicyTable| -> Vec<u64> {
            t.stages().flatten().map(|e| e.value.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a, b);
    }
}
