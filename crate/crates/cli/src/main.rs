use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use crosslearn_cli::{execute, RunConfig, COMMANDS, EXIT_USAGE};

/// Run a cross-learning experiment and write CSV artifacts plus a
/// `manifest.json` run record.
#[derive(Debug, Parser)]
#[command(name = "crosslearn", version)]
struct Cli {
    /// One of: gauss-verify, synth-sweep, sir-fit, sir-ablation, sir-synth,
    /// classify-demo, solver-check.
    command: String,

    /// JSON config file; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--set trials=1000` or
    /// `--set fit.admm.lambda0=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Output directory (default: `out/<command>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !COMMANDS.contains(&cli.command.as_str()) {
        eprintln!("error: unknown command `{}`; expected one of {}", cli.command, COMMANDS.join(", "));
        return ExitCode::from(EXIT_USAGE as u8);
    }
    let cfg = match RunConfig::load(&cli.command, cli.config.as_deref(), &cli.overrides, cli.out.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE as u8);
        }
        Some(n) => pool = pool.num_threads(n),
        None => {}
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let code = pool.install(|| execute(&cfg));
    ExitCode::from(code as u8)
}
