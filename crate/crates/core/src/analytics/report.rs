//! Cluster reports, attribute statistics, and their text and SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cluster::{
    kmeans, label_clusters, select_k, standardize, KDiagnostic, KMeansResult, Point,
    Standardization, DEFAULT_RESTARTS,
};
use super::eval::{evaluate_population, extract_features, mean_sd, EvalSettings, ParticipantSeries, TrustFeatures};
use super::ingest::AttributeTable;
use super::stats::{anova_oneway, posthoc_bonferroni, AnovaResult, PairwiseTest};
use crate::archetype::Archetype;
use crate::error::{Error, Result};

pub const MAX_SWEEP_K: usize = 8;

/// Number of clusters: fixed, or chosen by mean silhouette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KChoice {
    Fixed(usize),
    Auto,
}

impl Default for KChoice {
    fn default() -> Self {
        KChoice::Fixed(3)
    }
}

impl FromStr for KChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KChoice::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(KChoice::Fixed(k)),
            _ => Err(Error::invalid(format!("k must be a positive integer or \"auto\", got {s:?}"))),
        }
    }
}

impl std::fmt::Display for KChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KChoice::Fixed(k) => write!(f, "{k}"),
            KChoice::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantCluster {
    pub participant_id: String,
    pub features: TrustFeatures,
    pub cluster: usize,
    /// Generating archetype, when known (simulated data).
    pub true_archetype: Option<Archetype>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub k_choice: KChoice,
    pub seed: u64,
    pub participants: Vec<ParticipantCluster>,
    pub standardization: Standardization,
    pub centroids_standardized: Vec<Point>,
    /// Centroids as `(e_rms, mean_log_trust)`.
    pub centroids_raw: Vec<Point>,
    /// Archetype of each cluster; present only when `k == 3`.
    pub labels: Option<Vec<Archetype>>,
    pub sse: f64,
    pub silhouette: Option<f64>,
    pub diagnostics: Vec<KDiagnostic>,
    /// Share of participants whose cluster label equals their generating
    /// archetype; present when both are known.
    pub purity: Option<f64>,
}

impl ClusterReport {
    pub fn group_name(&self, cluster: usize) -> String {
        match &self.labels {
            Some(l) => l[cluster].to_string(),
            None => format!("cluster_{cluster}"),
        }
    }

    /// Participant id → cluster index.
    pub fn assignments(&self) -> BTreeMap<String, usize> {
        self.participants
            .iter()
            .map(|p| (p.participant_id.clone(), p.cluster))
            .collect()
    }

    pub fn label_of(&self, participant_id: &str) -> Option<Archetype> {
        let p = self.participants.iter().find(|p| p.participant_id == participant_id)?;
        self.labels.as_ref().map(|l| l[p.cluster])
    }
}

/// Clusters pre-computed features. `ids`, `features` and `truth` are
/// parallel.
pub fn cluster_features(
    ids: &[String],
    features: &[TrustFeatures],
    truth: &[Option<Archetype>],
    k_choice: KChoice,
    seed: u64,
) -> Result<ClusterReport> {
    if ids.len() != features.len() || ids.len() != truth.len() {
        return Err(Error::invalid("ids, features and archetypes must have equal lengths"));
    }
    let raw: Vec<Point> = features.iter().map(|f| [f.e_rms, f.mean_log_trust]).collect();
    if raw.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    let (z, standardization) = standardize(&raw);
    let hi = MAX_SWEEP_K.min(z.len().saturating_sub(1));
    let sweep = if hi >= 2 {
        Some(select_k(&z, 2..=hi, seed, DEFAULT_RESTARTS)?)
    } else {
        None
    };
    let k = match k_choice {
        KChoice::Fixed(k) => k,
        KChoice::Auto => sweep
            .as_ref()
            .map(|s| s.k)
            .ok_or_else(|| Error::invalid(format!("automatic k needs at least 3 participants, got {}", z.len())))?,
    };
    let from_sweep = sweep
        .as_ref()
        .and_then(|s| s.diagnostics.iter().position(|d| d.k == k).map(|i| (s.runs[i].clone(), s.diagnostics[i])));
    let (run, silhouette): (KMeansResult, Option<f64>) = match from_sweep {
        Some((run, d)) => (run, Some(d.silhouette)),
        None => (kmeans(&z, k, seed, DEFAULT_RESTARTS)?, None),
    };
    let centroids_raw: Vec<Point> = run.centroids.iter().map(|c| standardization.invert(c)).collect();
    let labels = if k == 3 { Some(label_clusters(&centroids_raw)?) } else { None };

    let participants: Vec<ParticipantCluster> = ids
        .iter()
        .zip(features)
        .zip(truth)
        .zip(&run.assignments)
        .map(|(((id, f), t), &c)| ParticipantCluster {
            participant_id: id.clone(),
            features: *f,
            cluster: c,
            true_archetype: *t,
        })
        .collect();
    let purity = match &labels {
        Some(l) if participants.iter().all(|p| p.true_archetype.is_some()) => Some(
            participants
                .iter()
                .filter(|p| p.true_archetype == Some(l[p.cluster]))
                .count() as f64
                / participants.len() as f64,
        ),
        _ => None,
    };
    Ok(ClusterReport {
        k,
        k_choice,
        seed,
        participants,
        standardization,
        centroids_standardized: run.centroids,
        centroids_raw,
        labels,
        sse: run.sse,
        silhouette,
        diagnostics: sweep.map(|s| s.diagnostics).unwrap_or_default(),
        purity,
    })
}

/// Online evaluation, feature extraction and clustering in one step.
pub fn build_cluster_report(
    series: &[ParticipantSeries],
    settings: &EvalSettings,
    k_choice: KChoice,
    seed: u64,
) -> Result<ClusterReport> {
    if series.is_empty() {
        return Err(Error::Precondition("no input: no participants to cluster".into()));
    }
    let evals = evaluate_population(series, settings)?;
    let features: Vec<TrustFeatures> = series
        .iter()
        .zip(&evals)
        .map(|(s, e)| extract_features(s, e))
        .collect();
    let ids: Vec<String> = series.iter().map(|s| s.participant_id.clone()).collect();
    let truth: Vec<Option<Archetype>> = series.iter().map(|s| s.archetype).collect();
    cluster_features(&ids, &features, &truth, k_choice, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAnalysis {
    pub attribute: String,
    pub groups: Vec<GroupSummary>,
    pub anova: AnovaResult,
    pub posthoc: Vec<PairwiseTest>,
}

/// One-way ANOVA and Bonferroni post-hoc of every attribute across clusters.
pub fn analyze_attributes(report: &ClusterReport, table: &AttributeTable) -> Result<Vec<AttributeAnalysis>> {
    let groups = report.assignments();
    table
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let samples = table.grouped(i, &groups, report.k)?;
            let summaries = samples
                .iter()
                .enumerate()
                .map(|(c, xs)| {
                    let (mean, sd) = mean_sd(xs);
                    GroupSummary { name: report.group_name(c), n: xs.len(), mean, sd }
                })
                .collect();
            Ok(AttributeAnalysis {
                attribute: name.clone(),
                groups: summaries,
                anova: anova_oneway(&samples)?,
                posthoc: posthoc_bonferroni(&samples)?,
            })
        })
        .collect()
}

pub fn cluster_text(report: &ClusterReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "participants: {}", report.participants.len());
    let _ = writeln!(s, "k: {} (requested {}), seed {}", report.k, report.k_choice, report.seed);
    let _ = writeln!(s, "within-cluster SSE: {:.4}", report.sse);
    if let Some(sil) = report.silhouette {
        let _ = writeln!(s, "mean silhouette: {sil:.4}");
    }
    if let Some(p) = report.purity {
        let _ = writeln!(s, "purity vs generating archetype: {p:.3}");
    }
    let _ = writeln!(s, "\n{:<26} {:>5} {:>10} {:>16}", "cluster", "n", "e_rms", "mean_log_trust");
    for (c, raw) in report.centroids_raw.iter().enumerate() {
        let n = report.participants.iter().filter(|p| p.cluster == c).count();
        let _ = writeln!(s, "{:<26} {:>5} {:>10.4} {:>16.4}", report.group_name(c), n, raw[0], raw[1]);
    }
    if !report.diagnostics.is_empty() {
        let _ = writeln!(s, "\n{:>3} {:>12} {:>12}", "k", "SSE", "silhouette");
        for d in &report.diagnostics {
            let _ = writeln!(s, "{:>3} {:>12.4} {:>12.4}", d.k, d.sse, d.silhouette);
        }
    }
    s
}

pub fn analysis_text(analyses: &[AttributeAnalysis]) -> String {
    let mut s = String::new();
    for a in analyses {
        let an = &a.anova;
        let _ = writeln!(
            s,
            "{}: F({}, {}) = {:.3}, p = {:.4}{}",
            a.attribute,
            an.df_between,
            an.df_within,
            an.f,
            an.p,
            if an.degenerate_variance { " (zero within-group variance)" } else { "" }
        );
        for g in &a.groups {
            let _ = writeln!(s, "  {:<24} n={:<4} mean={:.3} sd={:.3}", g.name, g.n, g.mean, g.sd);
        }
        for t in &a.posthoc {
            let _ = writeln!(
                s,
                "  {} vs {}: diff={:.3} t({})={:.3} p_bonf={:.4}",
                a.groups[t.group_a].name, a.groups[t.group_b].name, t.mean_difference, t.df, t.t, t.p_adjusted
            );
        }
    }
    s
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

/// Scatter of `(e_rms, mean_log_trust)` colored by cluster, with centroids
/// drawn as crosses.
pub fn scatter_svg(report: &ClusterReport) -> String {
    let (w, h, m) = (640.0, 480.0, 60.0);
    let pts: Vec<Point> = report
        .participants
        .iter()
        .map(|p| [p.features.e_rms, p.features.mean_log_trust])
        .chain(report.centroids_raw.iter().copied())
        .collect();
    let range = |d: usize| {
        let lo = pts.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(1e-3);
        (lo - pad, hi + pad)
    };
    let (x0, x1) = range(0);
    let (y0, y1) = range(1);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.3}</text>"#,
            sx(fx),
            h - m + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.2}</text>"#,
            m - 6.0,
            sy(fy) + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">E_RMS</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">mean log trust</text>"#,
        h / 2.0,
        h / 2.0
    );
    for p in &report.participants {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#,
            sx(p.features.e_rms),
            sy(p.features.mean_log_trust),
            PALETTE[p.cluster % PALETTE.len()],
            p.participant_id
        );
    }
    for (c, cen) in report.centroids_raw.iter().enumerate() {
        let (cx, cy) = (sx(cen[0]), sy(cen[1]));
        let color = PALETTE[c % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<path d="M{:.2} {:.2} l12 12 m0 -12 l-12 12" stroke="{color}" stroke-width="3"/>"#,
            cx - 6.0,
            cy - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            cx + 9.0,
            cy - 9.0,
            report.group_name(c)
        );
    }
    s.push_str("</svg>\n");
    s
}
