//! Dual algorithms for the cross-learning problem with a generic
//! [`LossModel`](crate::problem::LossModel): ADMM for the parametric ball
//! constraints and primal-dual gradient descent-ascent for the functional
//! output-gap constraints.

pub mod admm;
pub mod descent;
pub mod primal_dual;
pub mod projection;

use std::io::Write;

use crate::error::Result;
use crate::problem::ParamBundle;

pub use admm::{admm_solve, admm_solve_warm, AdmmConfig};
pub use primal_dual::{primal_dual_solve, subgradient_of_gap, subgradient_of_gap_on, PrimalDualConfig};
pub use projection::project_coupled_ball;

/// Outcome of a solver run, with one trace entry per outer iteration
/// (ADMM) or epoch (primal-dual).
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub final_bundle: ParamBundle,
    /// Final multipliers `λ_t ≥ 0`.
    pub duals: Vec<f64>,
    pub objective_trace: Vec<f64>,
    /// Constraint slacks per task at each iteration (`≤ 0` when satisfied).
    pub slack_trace: Vec<Vec<f64>>,
    pub dual_trace: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Final stopping residual (ADMM); 0 for fixed-epoch runs.
    pub residual: f64,
}

impl SolveReport {
    /// Writes `iter,objective,max_slack,lambda_1..lambda_T` with a header row.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let t = self.duals.len();
        let mut header = vec!["iter".to_string(), "objective".into(), "max_slack".into()];
        header.extend((1..=t).map(|i| format!("lambda_{i}")));
        w.write_record(&header)?;
        for k in 0..self.iterations {
            let max_slack = self.slack_trace[k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut rec = vec![(k + 1).to_string(), self.objective_trace[k].to_string(), max_slack.to_string()];
            rec.extend(self.dual_trace[k].iter().map(|l| l.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
