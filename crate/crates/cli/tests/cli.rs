use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crosslearn"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crosslearn-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn code(cmd: &mut Command) -> i32 {
    cmd.output().expect("run crosslearn").status.code().expect("exit code")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = tmp("unknown");
    assert_eq!(code(bin().args(["frobnicate", "--out"]).arg(&out)), 2);
    assert!(!out.exists());
}

#[test]
fn bad_arguments_write_nothing() {
    let out = tmp("bad-args");
    assert_eq!(code(bin().args(["synth-sweep", "--threads", "0", "--out"]).arg(&out)), 2);
    assert_eq!(code(bin().args(["synth-sweep", "--set", "novalue", "--out"]).arg(&out)), 2);
    assert_eq!(code(bin().args(["synth-sweep", "--set", "no_such_key=1", "--out"]).arg(&out)), 2);
    assert_eq!(code(bin().args(["synth-sweep", "--set", "sigma=-1", "--out"]).arg(&out)), 2);
    assert_eq!(code(bin().args(["sir-fit", "--set", "data.owid_path=/nonexistent.csv", "--out"]).arg(&out)), 2);
    assert!(!out.exists());
}

#[test]
fn config_file_for_another_command_is_rejected() {
    let dir = tmp("cfgfile");
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("cfg.json");
    std::fs::write(&file, r#"{"command": "gauss-verify", "seed": 3}"#).unwrap();
    let out = dir.join("out");
    assert_eq!(code(bin().args(["synth-sweep", "--config"]).arg(&file).arg("--out").arg(&out)), 2);
    assert!(!out.exists());
}

#[test]
fn sweep_writes_artifacts_and_manifest() {
    let out = tmp("sweep");
    let run = |extra: &[&str]| code(bin().args(["synth-sweep", "--threads", "2", "--set", "trials=200"]).args(extra).arg("--out").arg(&out));
    assert_eq!(run(&["--set", "seed=5"]), 0);
    let m = manifest(&out);
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["seed"], 5);
    assert_eq!(m["config"]["params"]["trials"], 200);
    assert_eq!(m["artifacts"], serde_json::json!(["mse_sweep.csv"]));
    let text = std::fs::read_to_string(out.join("mse_sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sigma,epsilon,e_sep,e_cons,e_cl"));
    assert_eq!(lines.count(), 25);

    let first = std::fs::read(out.join("mse_sweep.csv")).unwrap();
    assert_eq!(run(&["--set", "seed=5"]), 0);
    assert_eq!(std::fs::read(out.join("mse_sweep.csv")).unwrap(), first);
    assert_eq!(run(&["--set", "seed=6"]), 0);
    assert_ne!(std::fs::read(out.join("mse_sweep.csv")).unwrap(), first);
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn rerun_removes_files_of_the_previous_run() {
    let out = tmp("stale");
    let quick = ["--set", "trials=200", "--set", "moment_trials=200", "--set", "p2_trials=20", "--set", "p3_instances=5", "--set", "bootstrap_resamples=50"];
    code(bin().arg("gauss-verify").args(quick).arg("--out").arg(&out));
    assert!(out.join("moments.csv").exists());
    assert_eq!(code(bin().args(["synth-sweep", "--set", "trials=100", "--out"]).arg(&out)), 0);
    assert!(!out.join("moments.csv").exists());
    assert!(out.join("mse_sweep.csv").exists());
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn failed_gate_exits_one() {
    let out = tmp("gate");
    // a negative tolerance cannot be met
    let c = code(
        bin()
            .args(["classify-demo", "--set", "seeds=1", "--set", "eps_grid=[0,1000000]", "--set", "solver.epochs=20"])
            .args(["--set", "min_wins=0", "--set", "huge_tolerance=-1", "--out"])
            .arg(&out),
    );
    assert_eq!(c, 1);
    let m = manifest(&out);
    assert_eq!(m["exit_code"], 1);
    let failing: Vec<_> = m["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).collect();
    assert_eq!(failing.len(), 1);
    assert_eq!(failing[0]["name"], "largest radius matches separate");
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn unconverged_fit_exits_three_with_diagnostics() {
    let out = tmp("unconverged");
    let c = code(
        bin()
            .args(["sir-fit", "--set", "data.synthetic.t_count=3", "--set", "epsilon=0.02"])
            .args(["--set", "fit.fit_iters=50", "--set", "fit.admm.outer_iters=2", "--set", "fit.admm.residual_tol=1e-12", "--out"])
            .arg(&out),
    );
    assert_eq!(c, 3);
    assert!(out.join("diagnostics.txt").exists());
    assert!(out.join("params.csv").exists());
    assert_eq!(manifest(&out)["exit_code"], 3);
    std::fs::remove_dir_all(&out).unwrap();
}
