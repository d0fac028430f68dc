//! Command execution: buffered artifacts, checks, the run manifest and exit
//! codes.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::commands;
use crate::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTICS: &str = "diagnostics.txt";

/// One pass/fail line of the run record. Reference entries are logged but
/// never fail the run.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub gate: bool,
    pub detail: String,
}

impl Check {
    pub fn gate(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            gate: true,
            detail: detail.into(),
        }
    }

    pub fn reference(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            gate: false,
            ..Self::gate(name, passed, detail)
        }
    }
}

/// Everything a command produces. Files stay in memory until the command
/// has finished, so a failed validation leaves nothing on disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub resolved: Value,
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
    /// Non-empty when a solver stopped short of its tolerance.
    pub unconverged: Vec<String>,
}

impl Outcome {
    pub fn new(resolved: impl Serialize) -> Result<Self> {
        Ok(Self {
            resolved: serde_json::to_value(resolved)?,
            ..Self::default()
        })
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.to_string(), bytes));
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }
}

/// How a command failed.
#[derive(Debug)]
pub enum Failure {
    /// Bad config or input data; exit 2, nothing written.
    Config(anyhow::Error),
    /// A solver diverged or broke down; exit 3 with a diagnostics file.
    Solver(anyhow::Error),
}

impl From<crosslearn::Error> for Failure {
    fn from(e: crosslearn::Error) -> Self {
        use crosslearn::Error as E;
        match e {
            E::NonConvergence { .. } | E::Divergence { .. } | E::Integration { .. } => Failure::Solver(e.into()),
            other => Failure::Config(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Config(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.into())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: Value,
    threads: usize,
    wall_time_s: f64,
    exit_code: i32,
    artifacts: Vec<&'a str>,
    checks: &'a [Check],
    unconverged: &'a [String],
    error: Option<String>,
}

/// Runs `cfg` on the current rayon pool, writes its artifacts and manifest,
/// and returns the process exit code.
pub fn execute(cfg: &RunConfig) -> i32 {
    let start = Instant::now();
    let created = !cfg.output_dir.exists();
    if let Err(e) = prepare_dir(&cfg.output_dir) {
        eprintln!("error: {e:#}");
        return EXIT_USAGE;
    }
    eprintln!("{}: running", cfg.command);
    let result = commands::dispatch(cfg);
    let threads = rayon::current_num_threads();
    match result {
        Ok(out) => {
            let failed = out.checks.iter().any(|c| c.gate && !c.passed);
            let mut code = if failed { EXIT_CHECK_FAILED } else { EXIT_OK };
            let mut artifacts = out.artifacts;
            if !out.unconverged.is_empty() {
                code = EXIT_NONCONVERGENCE;
                let text = format!("solver stopped short of its tolerance:\n{}\n", out.unconverged.join("\n"));
                artifacts.push((DIAGNOSTICS.to_string(), text.into_bytes()));
            }
            for c in &out.checks {
                let tag = if !c.gate { "REF " } else if c.passed { "PASS" } else { "FAIL" };
                eprintln!("{}: {tag} {} ({})", cfg.command, c.name, c.detail);
            }
            let manifest = Manifest {
                command: &cfg.command,
                config: cfg.echo(out.resolved),
                threads,
                wall_time_s: start.elapsed().as_secs_f64(),
                exit_code: code,
                artifacts: artifacts.iter().map(|a| a.0.as_str()).collect(),
                checks: &out.checks,
                unconverged: &out.unconverged,
                error: None,
            };
            match write_all(&cfg.output_dir, &artifacts, &manifest) {
                Ok(()) => {
                    eprintln!("{}: wrote {} files to {}", cfg.command, artifacts.len() + 1, cfg.output_dir.display());
                    code
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_USAGE
                }
            }
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            if created {
                // leave no trace of a run that never started
                let _ = std::fs::remove_dir(&cfg.output_dir);
            }
            EXIT_USAGE
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            let text = format!("{e:#}\n\nconfig:\n{}\n", serde_json::to_string_pretty(&cfg.params).unwrap_or_default());
            let artifacts = vec![(DIAGNOSTICS.to_string(), text.into_bytes())];
            let manifest = Manifest {
                command: &cfg.command,
                config: cfg.echo(cfg.params.clone()),
                threads,
                wall_time_s: start.elapsed().as_secs_f64(),
                exit_code: EXIT_NONCONVERGENCE,
                artifacts: vec![DIAGNOSTICS],
                checks: &[],
                unconverged: &[],
                error: Some(format!("{e:#}")),
            };
            if let Err(e) = write_all(&cfg.output_dir, &artifacts, &manifest) {
                eprintln!("error: {e:#}");
            }
            EXIT_NONCONVERGENCE
        }
    }
}

/// Deletes the files listed by an earlier run's manifest in `dir`, so a
/// rerun with fewer outputs leaves no orphans behind.
fn remove_previous(dir: &Path) {
    let Ok(text) = std::fs::read_to_string(dir.join(MANIFEST)) else {
        return;
    };
    let Ok(old) = serde_json::from_str::<Value>(&text) else {
        return;
    };
    for name in old["artifacts"].as_array().into_iter().flatten().filter_map(Value::as_str) {
        if Path::new(name).file_name().is_some_and(|f| f == name) {
            let _ = std::fs::remove_file(dir.join(name));
        }
    }
}

/// Creates the output directory and makes sure it accepts files.
fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").with_context(|| format!("{} is not writable", dir.display()))?;
    std::fs::remove_file(&probe)?;
    Ok(())
}

fn write_all(dir: &Path, artifacts: &[(String, Vec<u8>)], manifest: &Manifest) -> Result<()> {
    remove_previous(dir);
    for (name, bytes) in artifacts {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST), text).context("writing manifest")?;
    Ok(())
}
