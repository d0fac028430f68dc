//! One module per command. Each one deserializes and validates its
//! parameter block before doing any work and returns its files in memory.

mod classify;
mod gauss;
mod sir;
mod solver_check;

use anyhow::anyhow;

use crate::config::RunConfig;
use crate::run::{Failure, Outcome};

pub const COMMANDS: [&str; 7] = [
    "gauss-verify",
    "synth-sweep",
    "sir-fit",
    "sir-ablation",
    "sir-synth",
    "classify-demo",
    "solver-check",
];

pub fn dispatch(cfg: &RunConfig) -> Result<Outcome, Failure> {
    match cfg.command.as_str() {
        "gauss-verify" => gauss::verify(cfg),
        "synth-sweep" => gauss::sweep(cfg),
        "sir-fit" => sir::fit(cfg),
        "sir-ablation" => sir::ablation(cfg),
        "sir-synth" => sir::synth(cfg),
        "classify-demo" => classify::demo(cfg),
        "solver-check" => solver_check::run(cfg),
        other => Err(Failure::Config(anyhow!("unknown command `{other}`"))),
    }
}

/// In-memory CSV with a header row and LF line endings.
pub(crate) struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<I, S>(header: I) -> Result<Self, Failure>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header)?;
        Ok(Self { w })
    }

    pub fn row<I, S>(&mut self, rec: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(rec)?;
        Ok(())
    }

    pub fn into_bytes(self) -> Result<Vec<u8>, Failure> {
        self.w.into_inner().map_err(|e| Failure::Config(anyhow!("csv buffer: {e}")))
    }
}

/// Runs a core CSV writer into a buffer.
pub(crate) fn buffered<F>(f: F) -> Result<Vec<u8>, Failure>
where
    F: FnOnce(&mut Vec<u8>) -> crosslearn::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub(crate) fn bail_config(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(anyhow!("{msg}"))
}
