//! Primal-dual descent-ascent on the Lagrangian of the functional problem
//!
//! `L(θ, λ) = (1/T) Σ_t L_t(θ_t) + Σ_t λ_t (gap_t(θ_t, θ_g) − ε)`
//!
//! where `gap_t` is the mean ℓ1 output difference between task `t`'s model
//! and the centroid model. Each epoch takes minibatch steps on all `θ`
//! jointly (the centroid only feels the constraint terms), then one
//! projected ascent step per `λ_t` on the full-batch gap.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::SolveReport;
use crate::error::{check_len, invalid, Error, Result};
use crate::linalg;
use crate::problem::{empirical_objective, functional_gap, LossModel, ParamBundle, TaskDataset};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrimalDualConfig {
    pub eta_p: f64,
    pub eta_d: f64,
    pub epochs: usize,
    /// Minibatch size; 0 means full batch.
    pub batch_size: usize,
    /// Seed of the per-epoch shuffles.
    pub seed: u64,
}

impl Default for PrimalDualConfig {
    fn default() -> Self {
        Self {
            eta_p: 0.003,
            eta_d: 10.0,
            epochs: 200,
            batch_size: 0,
            seed: 0,
        }
    }
}

impl PrimalDualConfig {
    pub fn validate(&self, datasets: &[TaskDataset]) -> Result<()> {
        if !(self.eta_p > 0.0 && self.eta_p.is_finite() && self.eta_d > 0.0 && self.eta_d.is_finite()) {
            return Err(invalid(format!("step sizes must be positive, got eta_p={} eta_d={}", self.eta_p, self.eta_d)));
        }
        if self.epochs == 0 {
            return Err(invalid("at least one epoch is required"));
        }
        let min_n = datasets.iter().map(TaskDataset::n_samples).min().unwrap_or(0);
        if self.batch_size > min_n {
            return Err(invalid(format!("batch size {} exceeds the smallest task ({min_n} samples)", self.batch_size)));
        }
        Ok(())
    }
}

/// Subgradients of the gap over the samples at `indices` with respect to
/// `θ_t` and `θ_g`, using `sign(f_t − f_g)` per output coordinate (0 at ties).
pub fn subgradient_of_gap_on(
    data: &TaskDataset,
    indices: &[usize],
    theta_t: &[f64],
    theta_g: &[f64],
    model: &dyn LossModel,
) -> (Vec<f64>, Vec<f64>) {
    let mut gt = vec![0.0; theta_t.len()];
    let mut gg = vec![0.0; theta_g.len()];
    for &i in indices {
        let x = data.input(i);
        let ft = model.predict(x, theta_t);
        let fg = model.predict(x, theta_g);
        let w: Vec<f64> = ft
            .iter()
            .zip(&fg)
            .map(|(a, b)| {
                let d = a - b;
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();
        if w.iter().all(|v| *v == 0.0) {
            continue;
        }
        linalg::axpy(1.0, &model.predict_vjp(x, theta_t, &w), &mut gt);
        linalg::axpy(-1.0, &model.predict_vjp(x, theta_g, &w), &mut gg);
    }
    let n = indices.len() as f64;
    gt.iter_mut().chain(gg.iter_mut()).for_each(|v| *v /= n);
    (gt, gg)
}

/// Full-batch version of [`subgradient_of_gap_on`].
pub fn subgradient_of_gap(data: &TaskDataset, theta_t: &[f64], theta_g: &[f64], model: &dyn LossModel) -> (Vec<f64>, Vec<f64>) {
    subgradient_of_gap_on(data, &data.all_indices(), theta_t, theta_g, model)
}

/// Runs `cfg.epochs` epochs from `init` with all `λ_t = 0`.
///
/// An epoch has `⌈max_t N_t / B⌉` steps; task `t` walks through a fresh
/// shuffle of its samples, wrapping around when it has fewer than the
/// largest task. Gradients for `θ_t` and `θ_g` are evaluated at the same
/// point and applied together.
pub fn primal_dual_solve(
    datasets: &[TaskDataset],
    model: &dyn LossModel,
    eps: f64,
    cfg: &PrimalDualConfig,
    init: &ParamBundle,
) -> Result<SolveReport> {
    if !(eps >= 0.0) {
        return Err(invalid(format!("centrality radius must be >= 0, got {eps}")));
    }
    if datasets.is_empty() {
        return Err(invalid("no tasks given"));
    }
    cfg.validate(datasets)?;
    let t = datasets.len();
    check_len("number of tasks", t, init.n_tasks())?;
    check_len("model parameter dimension", model.param_dim(), init.dim())?;

    let max_n = datasets.iter().map(TaskDataset::n_samples).max().unwrap_or(0);
    let steps_per_epoch = if cfg.batch_size == 0 { 1 } else { max_n.div_ceil(cfg.batch_size) };
    let mut g = rng::seeded(cfg.seed);
    let mut theta = init.clone();
    let mut lambda = vec![0.0; t];
    let mut report = SolveReport {
        final_bundle: theta.clone(),
        duals: lambda.clone(),
        objective_trace: Vec::with_capacity(cfg.epochs),
        slack_trace: Vec::with_capacity(cfg.epochs),
        dual_trace: Vec::with_capacity(cfg.epochs),
        converged: false,
        iterations: 0,
        residual: 0.0,
    };
    let inv_t = 1.0 / t as f64;

    for epoch in 0..cfg.epochs {
        let perms: Vec<Vec<usize>> = datasets
            .iter()
            .map(|d| {
                let mut p = d.all_indices();
                if cfg.batch_size > 0 {
                    p.shuffle(&mut g);
                }
                p
            })
            .collect();
        for step in 0..steps_per_epoch {
            let mut grad_g = vec![0.0; theta.dim()];
            let mut grads = Vec::with_capacity(t);
            for (i, d) in datasets.iter().enumerate() {
                let batch: Vec<usize> = if cfg.batch_size == 0 {
                    perms[i].clone()
                } else {
                    let n = d.n_samples();
                    (0..cfg.batch_size).map(|j| perms[i][(step * cfg.batch_size + j) % n]).collect()
                };
                let mut gt: Vec<f64> = model.grad_on(d, &batch, &theta.per_task[i]).into_iter().map(|v| v * inv_t).collect();
                if lambda[i] > 0.0 {
                    let (st, sg) = subgradient_of_gap_on(d, &batch, &theta.per_task[i], &theta.centroid, model);
                    linalg::axpy(lambda[i], &st, &mut gt);
                    linalg::axpy(lambda[i], &sg, &mut grad_g);
                }
                grads.push(gt);
            }
            for (th, gt) in theta.per_task.iter_mut().zip(&grads) {
                linalg::axpy(-cfg.eta_p, gt, th);
                model.project_params(th);
            }
            linalg::axpy(-cfg.eta_p, &grad_g, &mut theta.centroid);
            model.project_params(&mut theta.centroid);
            if !theta.is_finite() || theta.norm() > 1e8 {
                return Err(Error::Divergence {
                    solver: "primal-dual",
                    iteration: epoch + 1,
                    detail: format!("iterate norm {:.3e}; try a smaller eta_p", theta.norm()),
                });
            }
        }
        let slacks: Vec<f64> = datasets
            .iter()
            .zip(&theta.per_task)
            .map(|(d, th)| functional_gap(d, th, &theta.centroid, model) - eps)
            .collect();
        for (l, s) in lambda.iter_mut().zip(&slacks) {
            *l = (*l + cfg.eta_d * s).max(0.0);
        }
        report.objective_trace.push(empirical_objective(datasets, &theta, model)?);
        report.slack_trace.push(slacks);
        report.dual_trace.push(lambda.clone());
        report.iterations = epoch + 1;
    }
    report.duals = lambda;
    report.final_bundle = theta;
    report.converged = true;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConstantModel, LinearModel};

    #[test]
    fn gap_subgradient_basics() {
        let m = LinearModel::new(2, 1);
        let d = TaskDataset::new(0, vec![vec![1.0, 2.0]], vec![vec![0.0]]).unwrap();
        let (a, b) = subgradient_of_gap(&d, &[0.3, 0.1], &[0.3, 0.1], &m);
        assert_eq!((a, b), (vec![0.0, 0.0], vec![0.0, 0.0]));
        let (a, b) = subgradient_of_gap(&d, &[1.0, 1.0], &[0.0, 0.0], &m);
        assert_eq!((a, b), (vec![1.0, 2.0], vec![-1.0, -2.0]));
    }

    #[test]
    fn huge_radius_keeps_duals_at_zero() {
        let data: Vec<TaskDataset> = [1.0, -2.0]
            .iter()
            .enumerate()
            .map(|(i, y)| TaskDataset::from_targets(i, vec![vec![*y]]).unwrap())
            .collect();
        let cfg = PrimalDualConfig {
            eta_p: 0.1,
            epochs: 300,
            ..Default::default()
        };
        let rep = primal_dual_solve(&data, &ConstantModel::new(1), 100.0, &cfg, &ParamBundle::zeros(2, 1)).unwrap();
        assert!(rep.dual_trace.iter().flatten().all(|l| *l == 0.0));
        assert!((rep.final_bundle.per_task[0][0] - 1.0).abs() < 1e-6);
        assert!((rep.final_bundle.per_task[1][0] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn divergence_is_reported() {
        let data = vec![TaskDataset::from_targets(0, vec![vec![1.0]]).unwrap()];
        let cfg = PrimalDualConfig {
            eta_p: 5.0,
            epochs: 100,
            ..Default::default()
        };
        let err = primal_dual_solve(&data, &ConstantModel::new(1), 1.0, &cfg, &ParamBundle::zeros(1, 1)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }
}
