use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("trustmdp.h")
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include "trustmdp.h"

int main(void) {
    TmParams p;
    TmRewardConfig cfg;
    if (tm_params_default(&p) != TM_STATUS_OK) return 10;
    if (tm_reward_config_default(8, &cfg) != TM_STATUS_OK) return 11;

    double mean = 0.0;
    if (tm_trust_mean(-1.0, 1.0, &mean) != TM_STATUS_INVALID_ARGUMENT) return 12;
    if (tm_last_error_message() == NULL) return 13;

    TmAgent *agent = NULL;
    if (tm_agent_new(&p, &cfg, 0.4, 4, &agent) != TM_STATUS_OK) return 14;
    for (int i = 0; i < 8; i++) {
        TmAction a;
        uint8_t perf;
        if (tm_agent_recommend(agent, &a) != TM_STATUS_OK) return 15;
        if (tm_agent_observe(agent, i % 3 == 0, &perf) != TM_STATUS_OK) return 16;
        if (tm_agent_report_trust(agent, 0.6) != TM_STATUS_OK) return 17;
    }
    TmAction a;
    if (tm_agent_recommend(agent, &a) != TM_STATUS_INVALID_STATE) return 18;
    tm_agent_trust_estimate(agent, &mean);
    tm_agent_free(agent);
    printf("%s %.6f\n", tm_version(), mean);
    return 0;
}
"#;

#[test]
fn header_declares_the_exported_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = include_str!("../src/lib.rs");
    let exported: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() > 15);
    for name in exported {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(text.contains("typedef struct TmAgent TmAgent;"));
    assert!(text.contains("TM_STATUS_INVALID_STATE = 3"));
}

#[test]
fn c_program_compiles_and_runs_against_static_lib() {
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let c_file = tmp.join("smoke.c");
    std::fs::write(&c_file, PROGRAM).unwrap();

    let syntax = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&c_file)
        .output()
        .expect("a C compiler on PATH");
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    let lib = target_dir().join("libtrustmdp_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let exe = tmp.join("smoke");
    let link = Command::new("cc")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&c_file)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));

    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let out = String::from_utf8(run.stdout).unwrap();
    assert!(out.starts_with(env!("CARGO_PKG_VERSION")), "{out}");
}
