//! Cross-learning: multi-task estimation with each task's parameters (or
//! outputs) constrained to lie within a radius `ε` of a shared centroid.
//!
//! `ε = 0` recovers a single consensus model and `ε → ∞` recovers fully
//! separate per-task training; intermediate radii trade bias for variance.
//!
//! * [`problem`]: datasets, parameter bundles, the loss-model interface and
//!   error metrics.
//! * [`gaussian`]: exact estimators for the constant-regressor model and
//!   Monte Carlo harnesses.
//! * [`solvers`]: ADMM for parametric constraints, primal-dual descent for
//!   functional constraints.
//! * [`sir`]: epidemic fitting with the SIR model.
//! * [`classify`]: multi-domain softmax classification.
//! * [`dataio`]: OWID-style CSV ingestion and synthetic generators.

pub mod classify;
pub mod dataio;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod models;
pub mod numdiff;
pub mod problem;
pub mod rng;
pub mod sir;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
pub use problem::{
    empirical_objective, error_metrics, functional_gap, parametric_slacks, ConstraintKind, ConstraintSpec, ErrorTriple,
    LossModel, ParamBundle, TaskDataset,
};
