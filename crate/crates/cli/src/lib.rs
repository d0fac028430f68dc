//! Batch front-end for the cross-learning experiments: run any harness from
//! a JSON config and write plot-ready CSVs plus a `manifest.json` run
//! record.

pub mod commands;
pub mod config;
pub mod run;

pub use commands::COMMANDS;
pub use config::RunConfig;
pub use run::{execute, Check, Outcome, EXIT_CHECK_FAILED, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_USAGE};
