//! Command-line entry point: simulate, evaluate, cluster, analyze, serve.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use trustmdp::analytics::eval::{evaluate_population, extract_features, mean_sd, EvalSettings};
use trustmdp::analytics::ingest::{load_series_dir, AttributeTable};
use trustmdp::analytics::report::{
    analysis_text, analyze_attributes, build_cluster_report, cluster_text, scatter_svg, ClusterReport, KChoice,
};
use trustmdp::service::session::SessionConfig;
use trustmdp::service::ServiceConfig;
use trustmdp::sim::population::{participant_id, simulate_population, PopulationConfig, PopulationKind};
use trustmdp::sim::{write_episode_log, write_interactions_csv};
use trustmdp::Error;

#[derive(Parser)]
#[command(name = "trustmdp", version, about = "Trust-aware recommendation planning: simulate, evaluate, cluster, analyze, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a population of participants and write one episode log each.
    Simulate(SimulateArgs),
    /// Online prediction error (train on the first sites, refit periodically).
    Evaluate(EvaluateArgs),
    /// Cluster participants by prediction error and mean log trust.
    Cluster(ClusterArgs),
    /// One-way ANOVA and Bonferroni post-hoc of attributes across clusters.
    Analyze(AnalyzeArgs),
    /// Host live sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Output directory for logs and manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    participants: Option<usize>,
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threat_prob: Option<f64>,
    /// Feedback noise sd (heterogeneous populations).
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, value_enum)]
    population: Option<PopulationKind>,
    /// Agent refit cadence in sites; 0 disables refitting.
    #[arg(long)]
    refit_every: Option<usize>,
    /// Threat prior assumed by the planner at every site.
    #[arg(long)]
    threat_prior: Option<f64>,
    /// Also write every record to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON config (or a previous manifest) applied under explicit flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    /// Directory of .jsonl episode logs or .csv interaction tables.
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    train_len: Option<usize>,
    #[arg(long)]
    refit_every: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ClusterArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of clusters, or "auto" to pick by mean silhouette.
    #[arg(long)]
    k: Option<KChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_len: Option<usize>,
    #[arg(long)]
    refit_every: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    /// cluster_report.json written by `cluster`.
    #[arg(long)]
    report: PathBuf,
    /// CSV: participant id column, then numeric attribute columns.
    #[arg(long)]
    attributes: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    host: Option<String>,
    /// Where session event files are kept.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Browser origin allowed by CORS; repeatable. Any origin if omitted.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
    /// Default site count for new sessions.
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    threat_prob: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct ClusterConfig {
    k: KChoice,
    seed: u64,
    eval: EvalSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct ServeConfig {
    host: String,
    port: u16,
    data_dir: PathBuf,
    cors_origins: Vec<String>,
    defaults: SessionConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("sessions"),
            cors_origins: Vec::new(),
            defaults: SessionConfig::default(),
        }
    }
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 2,
            Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Defaults, then the config file, then explicit flags.
fn resolve<T: Serialize + DeserializeOwned + Default>(file: Option<&Path>, flags: Map<String, Value>) -> CliResult<T> {
    let mut v = serde_json::to_value(T::default())?;
    if let Some(path) = file {
        let mut loaded: Value = serde_json::from_reader(File::open(path)?)?;
        // a manifest carries its resolved config under "config"
        if loaded.get("subcommand").is_some() {
            loaded = loaded.get("config").cloned().unwrap_or(Value::Null);
        }
        if !loaded.is_object() {
            return Err(Failure { code: 1, message: format!("{}: config must be a JSON object", path.display()) });
        }
        merge(&mut v, loaded);
    }
    merge(&mut v, Value::Object(flags));
    serde_json::from_value(v).map_err(|e| Failure { code: 1, message: format!("config: {e}") })
}

fn flags(pairs: Vec<(&str, Option<Value>)>) -> Map<String, Value> {
    pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect()
}

fn nested(key: &str, inner: Map<String, Value>) -> Option<Value> {
    if inner.is_empty() {
        None
    } else {
        Some(json!({ key: inner }))
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: &'a C,
    inputs: Vec<String>,
    outputs: Vec<String>,
    created_at: String,
}

fn write_manifest<C: Serialize>(
    dir: &Path,
    subcommand: &str,
    config: &C,
    inputs: &[&Path],
    outputs: &[String],
) -> CliResult<()> {
    let m = Manifest {
        tool: "trustmdp",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.to_vec(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let mut w = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &m)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let estimator = flags(vec![("refit_every", a.refit_every.map(Value::from))]);
    let planner = flags(vec![("threat_prior_override", a.threat_prior.map(Value::from))]);
    let mut f = flags(vec![
        ("participants", a.participants.map(Value::from)),
        ("sites", a.sites.map(Value::from)),
        ("seed", a.seed.map(Value::from)),
        ("threat_prob", a.threat_prob.map(Value::from)),
        ("noise_sd", a.noise_sd.map(Value::from)),
        ("population", a.population.map(|p| serde_json::to_value(p).expect("enum serializes"))),
    ]);
    if !estimator.is_empty() {
        f.insert("estimator".into(), Value::Object(estimator));
    }
    if !planner.is_empty() {
        f.insert("planner".into(), Value::Object(planner));
    }
    let cfg: PopulationConfig = resolve(a.config.as_deref(), f)?;
    let logs = simulate_population(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    for (i, log) in logs.iter().enumerate() {
        let name = format!("{}.jsonl", participant_id(i));
        let mut w = BufWriter::new(File::create(a.out.join(&name))?);
        write_episode_log(&mut w, log)?;
        w.flush()?;
        outputs.push(name);
    }
    if let Some(csv_path) = &a.csv {
        let w = BufWriter::new(File::create(csv_path)?);
        write_interactions_csv(w, &logs)?;
        outputs.push(csv_path.display().to_string());
    }
    write_manifest(&a.out, "simulate", &cfg, &[], &outputs)?;
    log::info!("wrote {} episode logs to {}", logs.len(), a.out.display());
    Ok(())
}

fn eval_flags(train_len: Option<usize>, refit_every: Option<usize>) -> Map<String, Value> {
    flags(vec![
        ("train_len", train_len.map(Value::from)),
        ("refit_every", refit_every.map(Value::from)),
    ])
}

#[derive(Serialize)]
struct EvalRow<'a> {
    participant_id: &'a str,
    n_sites: usize,
    e_rms: f64,
    mean_log_trust: f64,
    archetype: Option<String>,
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let settings: EvalSettings = resolve(a.config.as_deref(), eval_flags(a.train_len, a.refit_every))?;
    let series = load_series_dir(&a.logs)?;
    let evals = evaluate_population(&series, &settings)?;
    fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("e_rms.csv")).map_err(Error::from)?;
    let mut values = Vec::with_capacity(series.len());
    for (s, e) in series.iter().zip(&evals) {
        let feat = extract_features(s, e);
        values.push(e.e_rms);
        w.serialize(EvalRow {
            participant_id: &s.participant_id,
            n_sites: s.len(),
            e_rms: e.e_rms,
            mean_log_trust: feat.mean_log_trust,
            archetype: s.archetype.map(|a| a.to_string()),
        })
        .map_err(Error::from)?;
    }
    w.flush()?;
    let (mean, sd) = mean_sd(&values);
    let mut w = csv::Writer::from_path(a.out.join("e_rms_summary.csv")).map_err(Error::from)?;
    w.write_record(["participants", "mean_e_rms", "sd_e_rms"]).map_err(Error::from)?;
    w.write_record([values.len().to_string(), mean.to_string(), sd.to_string()])
        .map_err(Error::from)?;
    w.flush()?;
    write_manifest(
        &a.out,
        "evaluate",
        &settings,
        &[&a.logs],
        &["e_rms.csv".into(), "e_rms_summary.csv".into()],
    )?;
    println!("participants: {}", values.len());
    println!("mean e_rms: {mean:.4} (sd {sd:.4})");
    Ok(())
}

#[derive(Serialize)]
struct AssignmentRow<'a> {
    participant_id: &'a str,
    cluster: usize,
    label: Option<String>,
    e_rms: f64,
    mean_log_trust: f64,
    true_archetype: Option<String>,
}

fn cluster(a: ClusterArgs) -> CliResult<()> {
    let mut f = flags(vec![
        ("k", a.k.map(|k| serde_json::to_value(k).expect("enum serializes"))),
        ("seed", a.seed.map(Value::from)),
    ]);
    if let Some(v) = nested("eval", eval_flags(a.train_len, a.refit_every)) {
        f.extend(v.as_object().expect("object").clone());
    }
    let cfg: ClusterConfig = resolve(a.config.as_deref(), f)?;
    let series = load_series_dir(&a.logs)?;
    let report = build_cluster_report(&series, &cfg.eval, cfg.k, cfg.seed)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("cluster_report.json"), &report)?;
    let text = cluster_text(&report);
    write_text(&a.out.join("cluster_report.txt"), &text)?;
    write_text(&a.out.join("clusters.svg"), &scatter_svg(&report))?;
    let mut w = csv::Writer::from_path(a.out.join("assignments.csv")).map_err(Error::from)?;
    for p in &report.participants {
        w.serialize(AssignmentRow {
            participant_id: &p.participant_id,
            cluster: p.cluster,
            label: report.labels.as_ref().map(|l| l[p.cluster].to_string()),
            e_rms: p.features.e_rms,
            mean_log_trust: p.features.mean_log_trust,
            true_archetype: p.true_archetype.map(|t| t.to_string()),
        })
        .map_err(Error::from)?;
    }
    w.flush()?;
    write_manifest(
        &a.out,
        "cluster",
        &cfg,
        &[&a.logs],
        &[
            "cluster_report.json".into(),
            "cluster_report.txt".into(),
            "clusters.svg".into(),
            "assignments.csv".into(),
        ],
    )?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct AnovaRow<'a> {
    attribute: &'a str,
    f: f64,
    df_between: usize,
    df_within: usize,
    p: f64,
    degenerate_variance: bool,
}

#[derive(Serialize)]
struct PosthocRow<'a> {
    attribute: &'a str,
    group_a: &'a str,
    group_b: &'a str,
    mean_difference: f64,
    t: f64,
    df: usize,
    p_raw: f64,
    p_adjusted: f64,
}

fn analyze(a: AnalyzeArgs) -> CliResult<()> {
    let report: ClusterReport = serde_json::from_reader(File::open(&a.report)?)?;
    let table = AttributeTable::read_path(&a.attributes)?;
    let analyses = analyze_attributes(&report, &table)?;
    fs::create_dir_all(&a.out)?;
    let mut anova = csv::Writer::from_path(a.out.join("anova.csv")).map_err(Error::from)?;
    let mut posthoc = csv::Writer::from_path(a.out.join("posthoc.csv")).map_err(Error::from)?;
    for an in &analyses {
        anova
            .serialize(AnovaRow {
                attribute: &an.attribute,
                f: an.anova.f,
                df_between: an.anova.df_between,
                df_within: an.anova.df_within,
                p: an.anova.p,
                degenerate_variance: an.anova.degenerate_variance,
            })
            .map_err(Error::from)?;
        for t in &an.posthoc {
            posthoc
                .serialize(PosthocRow {
                    attribute: &an.attribute,
                    group_a: &an.groups[t.group_a].name,
                    group_b: &an.groups[t.group_b].name,
                    mean_difference: t.mean_difference,
                    t: t.t,
                    df: t.df,
                    p_raw: t.p_raw,
                    p_adjusted: t.p_adjusted,
                })
                .map_err(Error::from)?;
        }
    }
    anova.flush()?;
    posthoc.flush()?;
    let text = analysis_text(&analyses);
    write_text(&a.out.join("analysis.txt"), &text)?;
    write_json(&a.out.join("analysis.json"), &analyses)?;
    write_manifest(
        &a.out,
        "analyze",
        &json!({}),
        &[&a.report, &a.attributes],
        &["anova.csv".into(), "posthoc.csv".into(), "analysis.txt".into(), "analysis.json".into()],
    )?;
    print!("{text}");
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let defaults = flags(vec![
        ("n_sites", a.sites.map(Value::from)),
        ("threat_prob", a.threat_prob.map(Value::from)),
    ]);
    let mut f = flags(vec![
        ("port", a.port.map(Value::from)),
        ("host", a.host.map(Value::from)),
        ("data_dir", a.data_dir.map(|d| Value::from(d.display().to_string()))),
        ("cors_origins", (!a.cors_origins.is_empty()).then(|| Value::from(a.cors_origins))),
    ]);
    if !defaults.is_empty() {
        f.insert("defaults".into(), Value::Object(defaults));
    }
    let cfg: ServeConfig = resolve(a.config.as_deref(), f)?;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|e| Failure { code: 1, message: format!("listen address: {e}") })?;
    let svc = ServiceConfig {
        data_dir: Some(cfg.data_dir.clone()),
        defaults: cfg.defaults.clone(),
        cors_origins: cfg.cors_origins.clone(),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(trustmdp::service::serve(addr, svc, async {
        let _ = tokio::signal::ctrl_c().await;
    }))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Cluster(a) => cluster(a),
        Command::Analyze(a) => analyze(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(3),
    }
}
