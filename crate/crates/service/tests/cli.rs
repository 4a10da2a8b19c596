mod common;

use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn seqdesign(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqdesign"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SEQDESIGN_STATE_DIR")
        .output()
        .unwrap()
}

fn ok_json(args: &[&str], cwd: &Path) -> Value {
    let out = seqdesign(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn experiment_toml(t_max: usize) -> String {
    let model = common::SMALL.split("[design]").next().unwrap();
    format!(
        r#"strategies = ["smcs", "trs", "gs"]
seeds = [3, 4]
t_max = {t_max}
{model}
[design]
n_particles = 50

[truth]
kind = "mixture"
weights = [0.7, 0.3]

[output]
steps = "out/steps.csv"
summary = "out/summary.csv"
"#
    )
}

#[test]
fn cli_session_matches_in_process_session() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), common::SMALL).unwrap();
    let d = dir.path();
    ok_json(&["session", "--state-dir", "st", "new", "s.toml", "--id", "cli"], d);
    let mut cli_rec = ok_json(&["session", "--state-dir", "st", "recommend", "cli"], d);
    for y in [25, 3, 0] {
        let filter = cli_rec["filter_id"].as_str().unwrap().to_string();
        ok_json(&["session", "--state-dir", "st", "observe", "cli", "--filter", &filter, "--count", &y.to_string()], d);
        cli_rec = ok_json(&["session", "--state-dir", "st", "recommend", "cli"], d);
    }
    let cli_view = ok_json(&["session", "--state-dir", "st", "status", "cli"], d);

    // The same sequence through the manager behind the HTTP handlers.
    let m = common::manager(&d.join("http"));
    m.create(common::small_spec(), Path::new("."), Some("http".into())).unwrap();
    let mut rec = m.recommend("http").unwrap();
    for y in [25, 3, 0] {
        m.observe("http", &rec.filter_id.clone(), y).unwrap();
        rec = m.recommend("http").unwrap();
    }
    let lib_view = serde_json::to_value(m.view("http").unwrap()).unwrap();
    assert_eq!(cli_view["posterior"], lib_view["posterior"]);
    assert_eq!(cli_view["pending"], lib_view["pending"]);
    assert_eq!(cli_rec, serde_json::to_value(&rec).unwrap());
}

#[test]
fn session_errors_exit_nonzero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = seqdesign(&["session", "--state-dir", "st", "status", "ghost"], dir.path());
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "not-found");
}

#[test]
fn seed_flag_overrides_design_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), common::SMALL).unwrap();
    let a = ok_json(&["--seed", "99", "session", "--state-dir", "st", "new", "s.toml", "--id", "a"], dir.path());
    let b = ok_json(&["session", "--state-dir", "st", "new", "s.toml", "--id", "b"], dir.path());
    assert_ne!(a["posterior"], b["posterior"]);
    let record: Value = serde_json::from_slice(&std::fs::read(dir.path().join("st/a.json")).unwrap()).unwrap();
    assert_eq!(record["spec"]["design"]["rng_seed"], 99);
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.toml"), experiment_toml(2)).unwrap();
    let run = |tag: &str| {
        let steps = format!("{tag}/steps.csv");
        let summary = format!("{tag}/summary.csv");
        let out = seqdesign(&["simulate", "e.toml", "--steps-out", &steps, "--summary-out", &summary], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(dir.path().join(steps)).unwrap(),
            std::fs::read(dir.path().join(summary)).unwrap(),
        )
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    // Threads do not change results.
    let out = seqdesign(&["--threads", "2", "simulate", "e.toml"], dir.path());
    assert!(out.status.success());
    assert_eq!(std::fs::read(dir.path().join("out/steps.csv")).unwrap(), first.0);

    let steps = String::from_utf8(first.0).unwrap();
    let rows: Vec<&str> = steps.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    // 3 strategies x 2 seeds x (prior + 2 steps).
    assert_eq!(rows.len(), 18);
}

#[test]
fn zero_steps_writes_prior_rows_only() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.toml"), experiment_toml(0)).unwrap();
    let out = seqdesign(&["simulate", "e.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let steps = std::fs::read_to_string(dir.path().join("out/steps.csv")).unwrap();
    let rows: Vec<&str> = steps.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("0")), "{steps}");
}

#[test]
fn validate_reports_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("good.toml"), common::SMALL).unwrap();
    std::fs::write(dir.path().join("bad.toml"), common::SMALL.replace("points = 100", "points = 0")).unwrap();
    let out = seqdesign(&["validate", "good.toml"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: session config"));
    let out = seqdesign(&["validate", "bad.toml"], dir.path());
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "invalid-config");
    assert_eq!(err["details"]["field"], "model.grid");
}
