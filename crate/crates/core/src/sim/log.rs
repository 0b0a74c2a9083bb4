//! Episode logs: JSON-lines (header, one line per site, totals) and a flat
//! CSV export with one row per site.
//!
//! Every JSON line carries a `kind` tag of `header`, `record` or `totals`.
//! Totals are recomputed from the records when a log is read back and a
//! mismatch is rejected.

use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize};

use super::{EstimatorSettings, PlannerSettings, Scenario, SimulatedHuman};
use crate::archetype::Archetype;
use crate::error::{Error, Result};
use crate::model::{task_reward, Action, Performance, RewardConfig};

pub const EPISODE_SCHEMA: &str = "trustmdp.episode.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub seed: u64,
    pub n_sites: usize,
    pub threat_prob: f64,
    pub cfg: RewardConfig,
    pub initial_health: f64,
    pub base_site_time: f64,
}

impl ScenarioSummary {
    pub fn of(s: &Scenario) -> Self {
        ScenarioSummary {
            seed: s.seed,
            n_sites: s.sites.len(),
            threat_prob: s.threat_prob,
            cfg: s.cfg,
            initial_health: s.initial_health,
            base_site_time: s.base_site_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub schema: String,
    pub participant_id: String,
    /// Generating archetype, when the participant was simulated from one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archetype: Option<Archetype>,
    pub scenario: ScenarioSummary,
    /// Absent for live sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<SimulatedHuman>,
    pub planner: PlannerSettings,
    pub estimator: EstimatorSettings,
}

/// Outcome of one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub stage: usize,
    pub recommendation: Action,
    pub human_action: Action,
    pub threat_present: bool,
    pub performance: Performance,
    pub realized_reward: f64,
    pub health_after: f64,
    pub elapsed_time_after: f64,
    /// Reported trust in `[0, 1]`.
    pub trust_feedback: Option<f64>,
    /// The agent's trust estimate for this site, made before the feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_trust: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTotals {
    pub final_health: f64,
    pub total_time: f64,
    /// Sum of health and time costs, without the trust-gain bonus.
    pub cumulative_task_reward: f64,
    pub cumulative_reward: f64,
    pub hits: usize,
    pub rarv_uses: usize,
    pub trust_trajectory: Vec<Option<f64>>,
    /// RMSE between the agent's predictions and the reported trust.
    pub prediction_rmse: Option<f64>,
}

impl EpisodeTotals {
    pub fn recompute(
        scenario: &ScenarioSummary,
        records: &[InteractionRecord],
    ) -> Result<EpisodeTotals> {
        let cfg = &scenario.cfg;
        let hits = records
            .iter()
            .filter(|r| r.human_action == Action::NoRarv && r.threat_present)
            .count();
        let rarv_uses = records
            .iter()
            .filter(|r| r.human_action == Action::UseRarv)
            .count();
        let cumulative_task_reward = records
            .iter()
            .map(|r| task_reward(r.human_action, r.threat_present, cfg))
            .sum();
        let cumulative_reward = records.iter().map(|r| r.realized_reward).sum();
        let pairs: Vec<(f64, f64)> = records
            .iter()
            .filter_map(|r| Some((r.predicted_trust?, r.trust_feedback?)))
            .collect();
        let prediction_rmse = if pairs.is_empty() {
            None
        } else {
            let (p, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Some(crate::model::rmse(&p, &f)?)
        };
        Ok(EpisodeTotals {
            final_health: scenario.initial_health - cfg.health_loss * hits as f64,
            total_time: cfg.rarv_time * rarv_uses as f64
                + scenario.base_site_time * records.len() as f64,
            cumulative_task_reward,
            cumulative_reward,
            hits,
            rarv_uses,
            trust_trajectory: records.iter().map(|r| r.trust_feedback).collect(),
            prediction_rmse,
        })
    }

    fn matches(&self, other: &EpisodeTotals) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        let close_opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        close(self.final_health, other.final_health)
            && close(self.total_time, other.total_time)
            && close(self.cumulative_task_reward, other.cumulative_task_reward)
            && close(self.cumulative_reward, other.cumulative_reward)
            && self.hits == other.hits
            && self.rarv_uses == other.rarv_uses
            && self.trust_trajectory == other.trust_trajectory
            && close_opt(self.prediction_rmse, other.prediction_rmse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub records: Vec<InteractionRecord>,
    pub totals: EpisodeTotals,
}

impl EpisodeLog {
    pub fn from_records(header: EpisodeHeader, records: Vec<InteractionRecord>) -> Result<Self> {
        let totals = EpisodeTotals::recompute(&header.scenario, &records)?;
        Ok(EpisodeLog {
            header,
            records,
            totals,
        })
    }

    pub fn performances(&self) -> Vec<Performance> {
        self.records.iter().map(|r| r.performance).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Box<EpisodeHeader>),
    Record(InteractionRecord),
    Totals(EpisodeTotals),
}

pub fn write_episode_log<W: Write>(mut w: W, log: &EpisodeLog) -> Result<()> {
    let mut line = |l: &Line| -> Result<()> {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    line(&Line::Header(Box::new(log.header.clone())))?;
    for r in &log.records {
        line(&Line::Record(*r))?;
    }
    line(&Line::Totals(log.totals.clone()))?;
    Ok(())
}

/// Parses a JSON-lines episode log and checks its totals.
pub fn read_episode_log<R: BufRead>(r: R) -> Result<EpisodeLog> {
    let mut header = None;
    let mut records = Vec::new();
    let mut totals = None;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if totals.is_some() {
            return Err(Error::invalid(format!("line {}: content after totals", n + 1)));
        }
        match serde_json::from_str::<Line>(&line)? {
            Line::Header(h) if header.is_none() && records.is_empty() => header = Some(*h),
            Line::Header(_) => {
                return Err(Error::invalid(format!("line {}: unexpected header", n + 1)))
            }
            Line::Record(_) if header.is_none() => {
                return Err(Error::invalid("episode log must start with a header"))
            }
            Line::Record(rec) => {
                if rec.stage != records.len() + 1 {
                    return Err(Error::invalid(format!(
                        "line {}: expected stage {}, found {}",
                        n + 1,
                        records.len() + 1,
                        rec.stage
                    )));
                }
                records.push(rec);
            }
            Line::Totals(t) => totals = Some(t),
        }
    }
    let header = header.ok_or_else(|| Error::invalid("episode log has no header"))?;
    if header.schema != EPISODE_SCHEMA {
        return Err(Error::invalid(format!("unsupported schema {:?}", header.schema)));
    }
    let stored = totals.ok_or_else(|| Error::invalid("episode log has no totals line"))?;
    let log = EpisodeLog::from_records(header, records)?;
    if !log.totals.matches(&stored) {
        return Err(Error::invalid(format!(
            "stored totals do not match records for participant {}",
            log.header.participant_id
        )));
    }
    Ok(log)
}

/// One CSV row. Only the first seven columns are required on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub participant_id: String,
    pub stage: usize,
    pub recommendation: Action,
    pub human_action: Action,
    #[serde(deserialize_with = "flexible_bool")]
    pub threat: bool,
    pub performance: Performance,
    pub trust_feedback: Option<f64>,
    #[serde(default)]
    pub realized_reward: Option<f64>,
    #[serde(default)]
    pub health_after: Option<f64>,
    #[serde(default)]
    pub elapsed_time_after: Option<f64>,
    #[serde(default)]
    pub predicted_trust: Option<f64>,
}

fn flexible_bool<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(serde::de::Error::custom(format!("not a boolean: {other:?}"))),
    }
}

pub fn write_interactions_csv<W: Write>(w: W, logs: &[EpisodeLog]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for log in logs {
        for r in &log.records {
            out.serialize(InteractionRow {
                participant_id: log.header.participant_id.clone(),
                stage: r.stage,
                recommendation: r.recommendation,
                human_action: r.human_action,
                threat: r.threat_present,
                performance: r.performance,
                trust_feedback: r.trust_feedback,
                realized_reward: Some(r.realized_reward),
                health_after: Some(r.health_after),
                elapsed_time_after: Some(r.elapsed_time_after),
                predicted_trust: r.predicted_trust,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads CSV rows grouped by participant, in order of first appearance,
/// each group sorted by stage.
pub fn read_interactions_csv<R: std::io::Read>(r: R) -> Result<Vec<(String, Vec<InteractionRow>)>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut groups: Vec<(String, Vec<InteractionRow>)> = Vec::new();
    for row in reader.deserialize() {
        let row: InteractionRow = row?;
        match groups.iter_mut().find(|(id, _)| *id == row.participant_id) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((row.participant_id.clone(), vec![row])),
        }
    }
    for (_, rows) in &mut groups {
        rows.sort_by_key(|r| r.stage);
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    fn sample_log() -> EpisodeLog {
        let sc = generate_scenario(12, 0.5, 2, RewardConfig::default()).unwrap();
        let h = SimulatedHuman {
            true_params: TrustParams::default(),
            feedback_noise_sd: 0.1,
            seed: 3,
        };
        run_episode("p-01", &sc, &h, &PlannerSettings::default(), &EstimatorSettings::default())
            .unwrap()
    }

    #[test]
    fn jsonl_roundtrip() {
        let log = sample_log();
        let mut buf = Vec::new();
        write_episode_log(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 14);
        assert!(text.lines().next().unwrap().contains(r#""kind":"header""#));
        let back = read_episode_log(buf.as_slice()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn tampered_totals_are_rejected() {
        let mut log = sample_log();
        log.totals.final_health += 5.0;
        let mut buf = Vec::new();
        write_episode_log(&mut buf, &log).unwrap();
        assert!(read_episode_log(buf.as_slice()).is_err());
    }

    #[test]
    fn missing_pieces_are_rejected() {
        let log = sample_log();
        let mut buf = Vec::new();
        write_episode_log(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let no_totals: Vec<&str> = text.lines().take(13).collect();
        assert!(read_episode_log(no_totals.join("\n").as_bytes()).is_err());
        let no_header: Vec<&str> = text.lines().skip(1).collect();
        assert!(read_episode_log(no_header.join("\n").as_bytes()).is_err());
    }

    #[test]
    fn csv_export_and_minimal_ingest() {
        let log = sample_log();
        let mut buf = Vec::new();
        write_interactions_csv(&mut buf, std::slice::from_ref(&log)).unwrap();
        let groups = read_interactions_csv(buf.as_slice()).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].1.len(), 12);
        assert_eq!(groups[0].1[3].trust_feedback, log.records[3].trust_feedback);

        let minimal = "participant_id,stage,recommendation,human_action,threat,performance,trust_feedback\n\
                       a,2,no_rarv,no_rarv,0,1,0.4\n\
                       a,1,use_rarv,no_rarv,1,1,0.5\n\
                       b,1,use_rarv,use_rarv,true,0,\n";
        let groups = read_interactions_csv(minimal.as_bytes()).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].1[0].stage, 1);
        assert!(groups[0].1[0].threat);
        assert_eq!(groups[1].1[0].trust_feedback, None);
    }
}
