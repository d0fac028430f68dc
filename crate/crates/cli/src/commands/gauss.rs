//! `gauss-verify` and `synth-sweep`.

use std::time::Instant;

use crosslearn::gaussian::{self, GaussianScenario, MseSweep, SuiteConfig};
use serde::{Deserialize, Serialize};

use super::{bail_config, Table};
use crate::config::RunConfig;
use crate::run::{Check, Failure, Outcome};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VerifyParams {
    mu: f64,
    sigmas: Vec<f64>,
    eps_grid: Vec<f64>,
    trials: usize,
    moment_trials: usize,
    p2_trials: usize,
    p3_instances: usize,
    bootstrap_resamples: usize,
    confidence: f64,
    /// Relative tolerance of the moment and endpoint comparisons.
    rel_tol: f64,
    moment_time_limit_s: f64,
    sweep_time_limit_s: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        let suite = SuiteConfig::default();
        Self {
            mu: 2.0,
            sigmas: vec![1.0, 2.0],
            eps_grid: suite.eps_grid,
            trials: suite.trials,
            moment_trials: 20_000,
            p2_trials: suite.p2_trials,
            p3_instances: suite.p3_instances,
            bootstrap_resamples: suite.bootstrap_resamples,
            confidence: suite.confidence,
            rel_tol: 0.03,
            moment_time_limit_s: 5.0,
            sweep_time_limit_s: 120.0,
        }
    }
}

impl VerifyParams {
    fn validate(&self) -> Result<(), Failure> {
        if !(self.mu.is_finite()) || self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(bail_config("mu must be finite and every sigma positive"));
        }
        if self.trials == 0 || self.moment_trials == 0 || self.p2_trials == 0 || self.p3_instances == 0 {
            return Err(bail_config("trial counts must be positive"));
        }
        if self.bootstrap_resamples == 0 || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(bail_config("need bootstrap resamples and a confidence in (0, 1)"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(bail_config("rel_tol must be positive"));
        }
        check_grid(&self.eps_grid)
    }
}

fn check_grid(grid: &[f64]) -> Result<(), Failure> {
    if grid.is_empty() || grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(bail_config("eps_grid must be a nonempty list of finite radii >= 0"));
    }
    if !grid.iter().any(|e| *e > 0.0) {
        return Err(bail_config("eps_grid needs a positive radius"));
    }
    Ok(())
}

fn rel(measured: f64, expected: f64) -> f64 {
    (measured - expected).abs() / expected.abs()
}

/// Moments, endpoints and the four claims on the four-point scenario for
/// every `σ`.
pub fn verify(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p: VerifyParams = cfg.params()?;
    p.validate()?;
    let scenarios = p
        .sigmas
        .iter()
        .map(|&s| GaussianScenario::four_point(p.mu, s, cfg.seed))
        .collect::<crosslearn::Result<Vec<_>>>()?;
    let suite = SuiteConfig {
        eps_grid: p.eps_grid.clone(),
        trials: p.trials,
        p2_trials: p.p2_trials,
        p3_instances: p.p3_instances,
        bootstrap_resamples: p.bootstrap_resamples,
        confidence: p.confidence,
    };

    let mut out = Outcome::new(&p)?;
    let mut sweep_csv = Table::new(["sigma", "epsilon", "e_sep", "e_cons", "e_cl"])?;
    let mut report_csv = Table::new(["sigma", "check", "passed", "value", "detail"])?;
    let mut moments_csv = Table::new(["sigma", "quantity", "task", "measured", "expected"])?;

    for (sigma, scenario) in p.sigmas.iter().zip(&scenarios) {
        let s = sigma.to_string();

        let t0 = Instant::now();
        let m = gaussian::moment_check(scenario, p.moment_trials)?;
        let moment_secs = t0.elapsed().as_secs_f64();
        for (t, (meas, exp)) in m.separate_mse.iter().zip(&m.separate_expected).enumerate() {
            moments_csv.row([s.clone(), "separate_var".into(), t.to_string(), meas.to_string(), exp.to_string()])?;
        }
        moments_csv.row([
            s.clone(),
            "consensus_var".into(),
            String::new(),
            m.consensus_variance.to_string(),
            m.consensus_expected.to_string(),
        ])?;
        for (t, (b, e)) in m.consensus_bias.iter().zip(&m.bias_expected).enumerate() {
            for (k, (bk, ek)) in b.iter().zip(e).enumerate() {
                moments_csv.row([s.clone(), format!("consensus_bias_{k}"), t.to_string(), bk.to_string(), ek.to_string()])?;
            }
        }
        let (ve, be) = (m.worst_variance_error(), m.worst_bias_error());
        out.check(Check::gate(
            format!("sigma={s} moments"),
            ve <= p.rel_tol && be <= p.rel_tol,
            format!("worst variance error {ve:.4}, worst bias error {be:.4}, tolerance {}", p.rel_tol),
        ));
        out.check(Check::gate(
            format!("sigma={s} moments runtime"),
            moment_secs < p.moment_time_limit_s,
            format!("{moment_secs:.2}s (limit {}s)", p.moment_time_limit_s),
        ));

        let t0 = Instant::now();
        let report = gaussian::proposition_suite(scenario, &suite)?;
        let sweep_secs = t0.elapsed().as_secs_f64();
        write_sweep_rows(&mut sweep_csv, &s, &report.sweep)?;

        let dim = scenario.dim() as f64;
        let n = scenario.n_per_task[0] as f64;
        let sep_expected = dim * sigma * sigma / n;
        let cons_expected = p.mu * p.mu + dim * sigma * sigma / (scenario.n_tasks() as f64 * n);
        let (e_s, e_c) = (report.sweep.mean_separate(), report.sweep.mean_consensus());
        let endpoint_ok = rel(e_s, sep_expected) <= p.rel_tol && rel(e_c, cons_expected) <= p.rel_tol;
        out.check(Check::gate(
            format!("sigma={s} endpoints"),
            endpoint_ok,
            format!("E_S {e_s:.4} vs {sep_expected:.4}, E_C {e_c:.4} vs {cons_expected:.4}"),
        ));
        for c in &report.checks {
            report_csv.row([s.clone(), c.name.to_string(), c.passed.to_string(), c.value.to_string(), c.detail.clone()])?;
            out.check(Check::gate(format!("sigma={s} {}", c.name), c.passed, c.detail.clone()));
        }
        out.check(Check::gate(
            format!("sigma={s} sweep runtime"),
            sweep_secs < p.sweep_time_limit_s,
            format!("{sweep_secs:.1}s (limit {}s)", p.sweep_time_limit_s),
        ));
    }
    out.add("mse_sweep.csv", sweep_csv.into_bytes()?);
    out.add("proposition_report.csv", report_csv.into_bytes()?);
    out.add("moments.csv", moments_csv.into_bytes()?);
    Ok(out)
}

fn write_sweep_rows(csv: &mut Table, sigma: &str, sweep: &MseSweep) -> Result<(), Failure> {
    for r in sweep.rows() {
        csv.row([sigma.to_string(), r.epsilon.to_string(), r.e_sep.to_string(), r.e_cons.to_string(), r.e_cl.to_string()])?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepParams {
    /// Per-task true means; all of one dimension.
    truth: Vec<Vec<f64>>,
    sigma: f64,
    /// Samples per task; a single entry applies to every task.
    n_per_task: Vec<usize>,
    eps_grid: Vec<f64>,
    trials: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            truth: vec![vec![2.0, 0.0], vec![-2.0, 0.0], vec![0.0, 2.0], vec![0.0, -2.0]],
            sigma: 1.0,
            n_per_task: vec![1],
            eps_grid: gaussian::linspace(0.0, 6.0, 25),
            trials: 5000,
        }
    }
}

/// Monte Carlo MSE sweep on a user-specified Gaussian scenario.
pub fn sweep(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let mut p: SweepParams = cfg.params()?;
    if p.n_per_task.len() == 1 && p.truth.len() > 1 {
        p.n_per_task = vec![p.n_per_task[0]; p.truth.len()];
    }
    check_grid(&p.eps_grid)?;
    if p.trials == 0 {
        return Err(bail_config("trials must be positive"));
    }
    let scenario = GaussianScenario::new(p.truth.clone(), p.sigma, p.n_per_task.clone(), cfg.seed)?;
    let sweep = gaussian::mc_mse_sweep(&scenario, &p.eps_grid, p.trials)?;
    let mut out = Outcome::new(&p)?;
    let mut csv = Table::new(["sigma", "epsilon", "e_sep", "e_cons", "e_cl"])?;
    write_sweep_rows(&mut csv, &p.sigma.to_string(), &sweep)?;
    out.add("mse_sweep.csv", csv.into_bytes()?);
    Ok(out)
}
