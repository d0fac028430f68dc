//! Acceptance run: one PASS/FAIL/SKIPPED line per criterion, produced by
//! driving the `crosslearn` binary and reading its run manifests.
//!
//! Criterion 12 needs an OWID snapshot, looked up in `$CROSSLEARN_OWID`
//! and then `data/owid-covid-data.csv` at the workspace root.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_crosslearn");

struct Run {
    code: i32,
    dir: PathBuf,
    manifest: Value,
}

impl Run {
    fn check(&self, name: &str) -> Option<(bool, String)> {
        self.manifest["checks"]
            .as_array()?
            .iter()
            .find(|c| c["name"] == name)
            .map(|c| (c["passed"] == true, c["detail"].as_str().unwrap_or("").to_string()))
    }
}

fn scratch() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crosslearn-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir
}

fn run(command: &str, out: &Path, threads: usize, sets: &[&str]) -> Run {
    let mut cmd = Command::new(BIN);
    cmd.arg(command).arg("--out").arg(out).arg("--threads").arg(threads.to_string());
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    let output = cmd.output().expect("launching crosslearn");
    let manifest = std::fs::read_to_string(out.join("manifest.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or(Value::Null);
    if manifest.is_null() {
        eprintln!("{command}: no manifest\n{}", String::from_utf8_lossy(&output.stderr));
    }
    Run {
        code: output.status.code().unwrap_or(-1),
        dir: out.to_path_buf(),
        manifest,
    }
}

struct Report {
    lines: Vec<(u32, &'static str, String)>,
}

impl Report {
    fn record(&mut self, n: u32, title: &str, parts: &[(Option<(bool, String)>, &str)]) {
        let mut ok = true;
        let mut details = Vec::new();
        for (r, label) in parts {
            match r {
                Some((p, d)) => {
                    ok &= *p;
                    details.push(format!("{label}: {d}"));
                }
                None => {
                    ok = false;
                    details.push(format!("{label}: missing"));
                }
            }
        }
        let status = if ok { "PASS" } else { "FAIL" };
        self.emit(n, status, format!("{title} [{}]", details.join("; ")));
    }

    fn emit(&mut self, n: u32, status: &'static str, text: String) {
        println!("criterion {n:>2}: {status} {text}");
        self.lines.push((n, status, text));
    }
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let name = e.file_name().to_string_lossy().into_owned();
        if name.ends_with(".csv") {
            files.insert(name, std::fs::read(e.path()).unwrap_or_default());
        }
    }
    files
}

/// Small configs so every command runs in seconds.
fn determinism_cases() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("gauss-verify", vec!["trials=400", "moment_trials=400", "p2_trials=50", "p3_instances=10", "bootstrap_resamples=100"]),
        ("synth-sweep", vec!["trials=300"]),
        ("sir-fit", vec!["data.synthetic.t_count=4", "epsilon=0.1", "fit.fit_iters=200", "fit.admm.outer_iters=20"]),
        (
            "sir-ablation",
            vec!["data.synthetic.t_count=4", "eps_grid=[0,0.1,1]", "fit.fit_iters=200", "fit.admm.outer_iters=20"],
        ),
        (
            "sir-synth",
            vec!["seeds=2", "synthetic.t_count=4", "eps_grid=[0,0.1,1]", "fit.fit_iters=200", "fit.admm.outer_iters=20"],
        ),
        ("classify-demo", vec!["seeds=2", "eps_grid=[0,0.2,1000000]", "solver.epochs=60", "min_wins=0"]),
        (
            "solver-check",
            vec![
                "kkt_instances=20",
                "admm_instances=4",
                "primal_dual_instances=4",
                "primal_dual.epochs=500",
                "projection_instances=10",
                "gap_points=50",
            ],
        ),
    ]
}

fn owid_snapshot() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("CROSSLEARN_OWID") {
        return Some(PathBuf::from(p));
    }
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/owid-covid-data.csv");
    p.is_file().then_some(p)
}

fn main() {
    let started = Instant::now();
    let root = scratch();
    let mut rep = Report { lines: Vec::new() };

    let gv = run("gauss-verify", &root.join("gauss-verify"), 8, &[]);
    rep.record(
        1,
        "Gaussian moments",
        &[(gv.check("sigma=1 moments"), "accuracy"), (gv.check("sigma=1 moments runtime"), "runtime")],
    );
    rep.record(
        2,
        "separate and consensus endpoints",
        &[(gv.check("sigma=1 endpoints"), "sigma=1"), (gv.check("sigma=2 endpoints"), "sigma=2")],
    );
    rep.record(
        3,
        "some radius beats both baselines",
        &[
            (gv.check("sigma=1 T1"), "sigma=1"),
            (gv.check("sigma=2 T1"), "sigma=2"),
            (gv.check("sigma=1 sweep runtime"), "runtime sigma=1"),
            (gv.check("sigma=2 sweep runtime"), "runtime sigma=2"),
        ],
    );
    rep.record(4, "small radius beats consensus", &[(gv.check("sigma=1 P1"), "sigma=1"), (gv.check("sigma=2 P1"), "sigma=2")]);
    rep.record(5, "covering radius never loses to separate", &[(gv.check("sigma=1 P2"), "sigma=1"), (gv.check("sigma=2 P2"), "sigma=2")]);
    rep.record(6, "strict gain on outlier datasets", &[(gv.check("sigma=1 P3"), "sigma=1"), (gv.check("sigma=2 P3"), "sigma=2")]);

    let sc = run("solver-check", &root.join("solver-check"), 8, &[]);
    rep.record(7, "KKT certificates", &[(sc.check("kkt certificate"), "kkt")]);
    rep.record(
        8,
        "solver equivalence",
        &[(sc.check("admm vs closed form"), "admm"), (sc.check("primal-dual vs closed form"), "primal-dual")],
    );
    rep.record(9, "coupled-ball projection", &[(sc.check("projection vs oracle"), "projection")]);
    rep.record(10, "functional gap bound", &[(sc.check("functional gap bound"), "gap")]);

    let ss = run("sir-synth", &root.join("sir-synth"), 8, &[]);
    rep.record(
        11,
        "SIR synthetic scarce-data gate",
        &[(ss.check("crosslearn beats both baselines"), "wins"), (ss.check("runtime"), "runtime")],
    );

    match owid_snapshot() {
        Some(path) => {
            let set = format!("data.owid_path={}", path.display());
            let sa = run("sir-ablation", &root.join("sir-ablation"), 8, &[&set, "target=ARG"]);
            let (status, text) = match sa.check("ARG ordering") {
                Some((true, d)) => ("PASS", d),
                Some((false, d)) => ("FAIL", d),
                None => ("FAIL", format!("no ordering entry (exit {})", sa.code)),
            };
            rep.emit(12, status, format!("OWID reference ordering, non-gating [{text}]"));
        }
        None => rep.emit(12, "SKIPPED", "OWID reference ordering, non-gating [no snapshot available]".into()),
    }

    let cd = run("classify-demo", &root.join("classify-demo"), 8, &[]);
    rep.record(
        13,
        "classification sweep shape",
        &[
            (cd.check("some radius matches both baselines"), "wins"),
            (cd.check("duals nonnegative"), "duals"),
            (cd.check("largest radius matches separate"), "largest radius"),
        ],
    );

    let mut diffs = Vec::new();
    for (command, sets) in determinism_cases() {
        let runs: Vec<Run> = [1usize, 8, 8]
            .iter()
            .enumerate()
            .map(|(k, &t)| run(command, &root.join(format!("det-{command}-{k}")), t, &sets))
            .collect();
        let files: Vec<_> = runs.iter().map(|r| csv_files(&r.dir)).collect();
        if files[0].is_empty() {
            diffs.push(format!("{command}: no CSVs (exit {})", runs[0].code));
        } else if files.iter().any(|f| f != &files[0]) {
            diffs.push(format!("{command}: outputs differ"));
        }
    }
    let status = if diffs.is_empty() { "PASS" } else { "FAIL" };
    let text = if diffs.is_empty() {
        "all 7 commands byte-identical across reruns at 1 and 8 threads".to_string()
    } else {
        diffs.join("; ")
    };
    rep.emit(14, status, format!("determinism [{text}]"));

    // criterion 12 is a reference comparison and never fails the run
    let failed = rep.lines.iter().filter(|l| l.1 == "FAIL" && l.0 != 12).count();
    let skipped = rep.lines.iter().filter(|l| l.1 == "SKIPPED").count();
    println!(
        "acceptance: {} passed, {failed} failed, {skipped} skipped in {:.0}s",
        rep.lines.iter().filter(|l| l.1 == "PASS").count(),
        started.elapsed().as_secs_f64()
    );
    let _ = std::fs::remove_dir_all(&root);
    if failed > 0 {
        std::process::exit(1);
    }
}
