use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use trustmdp::model::{predict_trajectory, Performance, TrustParams};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_trustmdp"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn log_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_deterministic_and_reproducible_from_manifest() {
    let t = tempfile::tempdir().unwrap();
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    let args = ["--participants", "6", "--sites", "30", "--seed", "11", "--population", "archetypes"];
    ok(&[&["simulate", "--out", s(&a)][..], &args].concat());
    ok(&[&["simulate", "--out", s(&b)][..], &args].concat());
    let la = log_files(&a);
    assert_eq!(la.len(), 6);
    assert_eq!(la, log_files(&b));

    let manifest = a.join("manifest.json");
    ok(&["simulate", "--out", s(&c), "--config", s(&manifest)]);
    assert_eq!(la, log_files(&c));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["config"]["participants"], 6);
    assert_eq!(m["config"]["threat_prob"], 0.3);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 6);

    // explicit flags win over the config file
    let d = t.path().join("d");
    ok(&["simulate", "--out", s(&d), "--config", s(&manifest), "--participants", "2"]);
    assert_eq!(log_files(&d).len(), 2);
}

#[test]
fn minimal_simulation() {
    let t = tempfile::tempdir().unwrap();
    let csv = t.path().join("rows.csv");
    ok(&["simulate", "--out", s(t.path()), "--participants", "1", "--sites", "1", "--csv", s(&csv)]);
    let text = fs::read_to_string(t.path().join("p001.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 2);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let out = run(&["evaluate", "--logs", s(t.path()), "--out", s(&t.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input"));
    let missing = t.path().join("missing");
    assert_eq!(run(&["evaluate", "--logs", s(&missing), "--out", s(t.path())]).status.code(), Some(2));
    let out = run(&["simulate", "--out", s(t.path()), "--threat-prob", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_self_consistent_csv_has_zero_error() {
    let t = tempfile::tempdir().unwrap();
    let logs = t.path().join("logs");
    fs::create_dir(&logs).unwrap();
    let mut csv = String::from("participant_id,stage,recommendation,human_action,threat,performance,trust_feedback\n");
    for pid in ["a", "b", "c"] {
        let perf: Vec<Performance> =
            (0..40).map(|i| Performance::from_bool(!(i * 7 + pid.len() * 3 + pid.as_bytes()[0] as usize).is_multiple_of(5))).collect();
        let traj = predict_trajectory(&TrustParams::default(), &perf);
        for (i, (p, v)) in perf.iter().zip(&traj).enumerate() {
            let threat = !p.is_success();
            csv.push_str(&format!("{pid},{},no_rarv,no_rarv,{threat},{},{v}\n", i + 1, *p as u8));
        }
    }
    fs::write(logs.join("rows.csv"), csv).unwrap();
    let out_dir = t.path().join("out");
    let stdout = ok(&["evaluate", "--logs", s(&logs), "--out", s(&out_dir)]);
    assert!(stdout.contains("mean e_rms: 0.0000"), "{stdout}");
    let summary = fs::read_to_string(out_dir.join("e_rms_summary.csv")).unwrap();
    assert!(summary.starts_with("participants,mean_e_rms,sd_e_rms\n3,0,"), "{summary}");
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn cluster_then_analyze() {
    let t = tempfile::tempdir().unwrap();
    let logs = t.path().join("logs");
    ok(&["simulate", "--out", s(&logs), "--participants", "30", "--sites", "60", "--population", "archetypes"]);
    let cl = t.path().join("cl");
    let text = ok(&["cluster", "--logs", s(&logs), "--out", s(&cl), "--k", "auto"]);
    assert!(text.contains("k: 3 (requested auto)"), "{text}");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(cl.join("cluster_report.json")).unwrap()).unwrap();
    assert!(report["purity"].as_f64().unwrap() >= 0.9);
    assert!(fs::read_to_string(cl.join("clusters.svg")).unwrap().starts_with("<svg"));

    let ids: Vec<String> = report["participants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["participant_id"].as_str().unwrap().to_string())
        .collect();
    let mut attrs = String::from("id,flat,score\n");
    for (i, id) in ids.iter().enumerate() {
        attrs.push_str(&format!("{id},5,{}\n", i % 7));
    }
    let attr_path = t.path().join("attrs.csv");
    fs::write(&attr_path, &attrs).unwrap();
    let an = t.path().join("an");
    let text = ok(&["analyze", "--report", s(&cl.join("cluster_report.json")), "--attributes", s(&attr_path), "--out", s(&an)]);
    assert!(text.contains("flat: F(2, 27) = 0.000, p = 1.0000"), "{text}");
    let anova = fs::read_to_string(an.join("anova.csv")).unwrap();
    assert_eq!(anova.lines().count(), 3);
    assert_eq!(fs::read_to_string(an.join("posthoc.csv")).unwrap().lines().count(), 7);

    // drop one participant and add a stranger
    let mut lines: Vec<&str> = attrs.lines().collect();
    let dropped = lines.remove(3).split(',').next().unwrap().to_string();
    let broken = format!("{}\nzz9,1,1\n", lines.join("\n"));
    fs::write(&attr_path, broken).unwrap();
    let out = run(&["analyze", "--report", s(&cl.join("cluster_report.json")), "--attributes", s(&attr_path), "--out", s(&an)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&dropped) && err.contains("zz9"), "{err}");
}

#[test]
fn cluster_rejects_too_few_participants() {
    let t = tempfile::tempdir().unwrap();
    let logs = t.path().join("logs");
    ok(&["simulate", "--out", s(&logs), "--participants", "2", "--sites", "30"]);
    let out = run(&["cluster", "--logs", s(&logs), "--out", s(&t.path().join("cl")), "--k", "3"]);
    assert_eq!(out.status.code(), Some(1));
}
