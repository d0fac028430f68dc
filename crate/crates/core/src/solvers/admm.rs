//! ADMM for `min Σ_t L_t(θ_t)` subject to `‖θ_t − θ_g‖ ≤ ε`.
//!
//! The variables are split into `θ = (θ_1..θ_T, θ_g)` and a copy `z`
//! constrained to the coupled-ball set `C`; `u` is the scaled dual. One
//! iteration with penalty parameter `λ_k = λ₀ Γ^(k mod K)` is
//!
//! ```text
//! θ_t ← argmin L_t(θ) + ‖θ − z_t + u_t‖² / (2λ_k)
//! θ_g ← z_g − u_g
//! z   ← P_C(θ + u)
//! u   ← u + θ − z
//! ```
//!
//! where `L_t` is task `t`'s mean empirical loss. With
//! [`AdmmConfig::projection_first`] the `z` step runs before the `θ` steps. Since `u` is the
//! unscaled multiplier times `λ_k`, it is rescaled by `λ_new/λ_old` whenever
//! the schedule changes `λ` (see [`AdmmConfig::rescale_duals`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::descent::{self, DescentOptions};
use super::projection::project_coupled_ball;
use super::SolveReport;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::problem::{empirical_objective, parametric_slacks, LossModel, ParamBundle, TaskDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    pub lambda0: f64,
    pub gamma: f64,
    pub schedule_period: usize,
    pub outer_iters: usize,
    pub prox_inner_iters: usize,
    pub prox_inner_tol: f64,
    pub projection_tol: f64,
    /// Relative tolerance on the primal and dual residuals.
    pub residual_tol: f64,
    /// Keep the unscaled multipliers continuous across `λ` changes.
    pub rescale_duals: bool,
    /// Update `z` before `θ` in each iteration. The multiplier then equals
    /// the loss gradient at the new `θ`, which is what keeps ADMM stable on
    /// nonconvex losses; `z` no longer needs a starting value.
    pub projection_first: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            gamma: 0.9,
            schedule_period: 50,
            outer_iters: 5000,
            prox_inner_iters: 500,
            prox_inner_tol: 1e-8,
            projection_tol: 1e-10,
            residual_tol: 1e-6,
            rescale_duals: true,
            projection_first: false,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda0", self.lambda0),
            ("prox_inner_tol", self.prox_inner_tol),
            ("projection_tol", self.projection_tol),
            ("residual_tol", self.residual_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("admm {name} must be positive, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid(format!("admm gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.schedule_period == 0 || self.outer_iters == 0 || self.prox_inner_iters == 0 {
            return Err(invalid("admm iteration counts and schedule period must be positive"));
        }
        Ok(())
    }

    /// `λ_k = λ₀ Γ^(k mod K)`.
    pub fn lambda_at(&self, k: usize) -> f64 {
        self.lambda0 * self.gamma.powi((k % self.schedule_period) as i32)
    }
}

struct ProxOutcome {
    theta: Vec<f64>,
    step: f64,
    converged: bool,
}

fn prox_step(
    model: &dyn LossModel,
    data: &TaskDataset,
    anchor: &[f64],
    lambda: f64,
    warm: &[f64],
    step: f64,
    cfg: &AdmmConfig,
) -> ProxOutcome {
    let indices = data.all_indices();
    let f = |th: &[f64]| model.empirical_loss_on(data, &indices, th) + linalg::dist_sq(th, anchor) / (2.0 * lambda);
    let g = |th: &[f64]| {
        let mut grad = model.grad_on(data, &indices, th);
        for ((gi, ti), ai) in grad.iter_mut().zip(th).zip(anchor) {
            *gi += (ti - ai) / lambda;
        }
        grad
    };
    let opts = DescentOptions {
        max_iters: cfg.prox_inner_iters,
        grad_tol: cfg.prox_inner_tol,
        initial_step: Some(step),
        ..DescentOptions::default()
    };
    let out = descent::minimize(f, g, |th: &mut [f64]| model.project_params(th), warm, &opts);
    ProxOutcome {
        theta: out.x,
        step: out.last_step,
        converged: out.converged,
    }
}

/// Runs ADMM from `init` (used as the warm start of the per-task prox
/// problems); `z` and `u` start at zero. The returned bundle is the last
/// `z`, which lies in `C` by construction.
///
/// Reported duals are `‖u_t‖/λ_k`, the multipliers of the unsquared ball
/// constraints for the objective `Σ_t L_t`.
pub fn admm_solve(
    datasets: &[TaskDataset],
    model: &dyn LossModel,
    eps: f64,
    cfg: &AdmmConfig,
    init: &ParamBundle,
) -> Result<SolveReport> {
    run(datasets, model, eps, cfg, init, None)
}

/// As [`admm_solve`] with `z` starting at the projection of `init` onto
/// `C` instead of zero. Nonconvex losses with flat regions near the origin
/// (the SIR fits) need this to stay in the basin of `init`.
pub fn admm_solve_warm(
    datasets: &[TaskDataset],
    model: &dyn LossModel,
    eps: f64,
    cfg: &AdmmConfig,
    init: &ParamBundle,
) -> Result<SolveReport> {
    run(datasets, model, eps, cfg, init, Some(init))
}

fn run(
    datasets: &[TaskDataset],
    model: &dyn LossModel,
    eps: f64,
    cfg: &AdmmConfig,
    init: &ParamBundle,
    z0: Option<&ParamBundle>,
) -> Result<SolveReport> {
    cfg.validate()?;
    if !(eps >= 0.0) {
        return Err(invalid(format!("centrality radius must be >= 0, got {eps}")));
    }
    let t = datasets.len();
    if t == 0 {
        return Err(invalid("no tasks given"));
    }
    crate::error::check_len("number of tasks", t, init.n_tasks())?;
    crate::error::check_len("model parameter dimension", model.param_dim(), init.dim())?;

    let s = init.dim();
    let mut theta = init.clone();
    let mut z = match z0 {
        Some(b) => project_coupled_ball(b, eps, cfg.projection_tol)?,
        None => ParamBundle::zeros(t, s),
    };
    let mut u = ParamBundle::zeros(t, s);
    let mut steps = vec![0.1; t];

    let mut report = SolveReport {
        final_bundle: z.clone(),
        duals: vec![0.0; t],
        objective_trace: Vec::new(),
        slack_trace: Vec::new(),
        dual_trace: Vec::new(),
        converged: false,
        iterations: 0,
        residual: f64::INFINITY,
    };
    let mut prev_lambda = cfg.lambda_at(0);

    for k in 0..cfg.outer_iters {
        let lambda = cfg.lambda_at(k);
        if cfg.rescale_duals && lambda != prev_lambda {
            let r = lambda / prev_lambda;
            u.per_task.iter_mut().chain(std::iter::once(&mut u.centroid)).for_each(|v| v.iter_mut().for_each(|x| *x *= r));
        }
        prev_lambda = lambda;

        let theta_step = |theta: &mut ParamBundle, steps: &mut [f64], z: &ParamBundle, u: &ParamBundle| {
            let outcomes: Vec<ProxOutcome> = (0..t)
                .into_par_iter()
                .map(|i| {
                    let anchor = linalg::sub(&z.per_task[i], &u.per_task[i]);
                    prox_step(model, &datasets[i], &anchor, lambda, &theta.per_task[i], steps[i], cfg)
                })
                .collect();
            let mut all_converged = true;
            for (i, out) in outcomes.into_iter().enumerate() {
                all_converged &= out.converged;
                theta.per_task[i] = out.theta;
                steps[i] = out.step;
            }
            theta.centroid = linalg::sub(&z.centroid, &u.centroid);
            all_converged
        };
        let z_step = |theta: &ParamBundle, u: &ParamBundle| {
            let mut v = theta.clone();
            for (vi, ui) in v.per_task.iter_mut().zip(&u.per_task) {
                linalg::axpy(1.0, ui, vi);
            }
            linalg::axpy(1.0, &u.centroid, &mut v.centroid);
            project_coupled_ball(&v, eps, cfg.projection_tol)
        };

        // the dual residual is the change of the block updated second,
        // times the penalty 1/λ; the max(1, ·) keeps a small λ from
        // stalling that block and passing the test far from the optimum
        let (all_converged, dual_res) = if cfg.projection_first {
            z = z_step(&theta, &u)?;
            let before = theta.clone();
            let ok = theta_step(&mut theta, &mut steps, &z, &u);
            (ok, theta.distance(&before) * (1.0 / lambda).max(1.0))
        } else {
            let ok = theta_step(&mut theta, &mut steps, &z, &u);
            let z_next = z_step(&theta, &u)?;
            let d = z_next.distance(&z) * (1.0 / lambda).max(1.0);
            z = z_next;
            (ok, d)
        };
        let primal_res = theta.distance(&z);
        for (ui, (ti, zi)) in u.per_task.iter_mut().zip(theta.per_task.iter().zip(&z.per_task)) {
            for ((a, b), c) in ui.iter_mut().zip(ti).zip(zi) {
                *a += b - c;
            }
        }
        for ((a, b), c) in u.centroid.iter_mut().zip(&theta.centroid).zip(&z.centroid) {
            *a += b - c;
        }
        if !theta.is_finite() || !u.is_finite() || theta.norm() > 1e12 {
            return Err(Error::Divergence {
                solver: "admm",
                iteration: k + 1,
                detail: format!("iterate norm {:.3e}", theta.norm()),
            });
        }

        let duals: Vec<f64> = u.per_task.iter().map(|ui| linalg::norm(ui) / lambda).collect();
        report.objective_trace.push(empirical_objective(datasets, &z, model)?);
        report.slack_trace.push(parametric_slacks(&z, eps));
        report.dual_trace.push(duals.clone());
        report.duals = duals;
        report.iterations = k + 1;

        let scale = 1.0 + z.norm();
        report.residual = primal_res.max(dual_res) / scale;
        if primal_res < cfg.residual_tol * scale && dual_res < cfg.residual_tol * scale && all_converged {
            report.converged = true;
            break;
        }
    }
    report.final_bundle = z;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{crosslearn_gaussian, SufficientStats};
    use crate::models::ConstantModel;

    fn tasks(ys: &[&[f64]]) -> Vec<TaskDataset> {
        ys.iter()
            .enumerate()
            .map(|(i, y)| TaskDataset::from_targets(i, y.chunks(1).map(|c| c.to_vec()).collect()).unwrap())
            .collect()
    }

    #[test]
    fn schedule_is_periodic() {
        let cfg = AdmmConfig {
            schedule_period: 3,
            gamma: 0.5,
            ..Default::default()
        };
        let l: Vec<f64> = (0..7).map(|k| cfg.lambda_at(k)).collect();
        assert_eq!(l, vec![1.0, 0.5, 0.25, 1.0, 0.5, 0.25, 1.0]);
    }

    #[test]
    fn scalar_quadratic_matches_closed_form() {
        let data = tasks(&[&[0.0, 1.0], &[3.0], &[5.0, 6.0, 7.0]]);
        let model = ConstantModel::new(1);
        let stats = SufficientStats::from_datasets(&data).unwrap();
        for eps in [0.0, 0.4, 1.5, 10.0] {
            let rep = admm_solve(&data, &model, eps, &AdmmConfig::default(), &ParamBundle::zeros(3, 1)).unwrap();
            assert!(rep.converged, "eps {eps}");
            let exact = crosslearn_gaussian(&stats, eps, 1e-12).unwrap();
            for (a, b) in rep.final_bundle.per_task.iter().zip(&exact.per_task) {
                assert!((a[0] - b[0]).abs() < 1e-4, "eps {eps}: {a:?} vs {b:?}");
            }
            assert!(parametric_slacks(&rep.final_bundle, eps).iter().all(|s| *s <= 1e-9));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let data = tasks(&[&[0.0]]);
        let cfg = AdmmConfig {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(admm_solve(&data, &ConstantModel::new(1), 0.1, &cfg, &ParamBundle::zeros(1, 1)).is_err());
    }
}
