//! Multi-domain classification with a softmax-linear model per domain,
//! trained under output-coupled constraints by primal-dual descent.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::linalg;
use crate::problem::{LossModel, ParamBundle, TaskDataset};
use crate::rng;
use crate::solvers::{primal_dual_solve, PrimalDualConfig};

/// Sentinel radius of the separate baseline row.
pub const SEPARATE_SENTINEL: f64 = -1.0;
/// Sentinel radius of the consensus baseline row.
pub const CONSENSUS_SENTINEL: f64 = -2.0;

/// `p = softmax(W x + b)`, with `θ = (W row-major, b)`, `W ∈ R^{P×D}`.
///
/// The loss is `Σ_k y_k (ln y_k − ln p_k)`, which is the cross-entropy for
/// one-hot `y` and vanishes at `p = y` for any label distribution.
#[derive(Debug, Clone, Copy)]
pub struct SoftmaxModel {
    pub dim: usize,
    pub classes: usize,
}

impl SoftmaxModel {
    pub fn new(dim: usize, classes: usize) -> Self {
        Self { dim, classes }
    }

    fn logits(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        let (w, b) = theta.split_at(self.classes * self.dim);
        (0..self.classes)
            .map(|k| linalg::dot(&w[k * self.dim..(k + 1) * self.dim], x) + b[k])
            .collect()
    }

    fn log_softmax(z: &[f64]) -> Vec<f64> {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        z.iter().map(|v| v - lse).collect()
    }

    /// Adds `g ⊗ (x, 1)` to the gradient buffer laid out like `θ`.
    fn accumulate(&self, out: &mut [f64], g: &[f64], x: &[f64]) {
        let (w, b) = out.split_at_mut(self.classes * self.dim);
        for k in 0..self.classes {
            linalg::axpy(g[k], x, &mut w[k * self.dim..(k + 1) * self.dim]);
            b[k] += g[k];
        }
    }
}

impl LossModel for SoftmaxModel {
    fn param_dim(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    fn output_dim(&self) -> usize {
        self.classes
    }

    fn predict(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        Self::log_softmax(&self.logits(x, theta)).into_iter().map(f64::exp).collect()
    }

    fn loss(&self, y: &[f64], y_hat: &[f64]) -> f64 {
        y.iter()
            .zip(y_hat)
            .filter(|(yk, _)| **yk > 0.0)
            .map(|(yk, pk)| yk * (yk.ln() - pk.ln()))
            .sum()
    }

    fn empirical_loss_on(&self, data: &TaskDataset, indices: &[usize], theta: &[f64]) -> f64 {
        let total: f64 = indices
            .iter()
            .map(|&i| {
                let logp = Self::log_softmax(&self.logits(data.input(i), theta));
                data.target(i)
                    .iter()
                    .zip(&logp)
                    .filter(|(yk, _)| **yk > 0.0)
                    .map(|(yk, lp)| yk * (yk.ln() - lp))
                    .sum::<f64>()
            })
            .sum();
        total / indices.len() as f64
    }

    fn grad_on(&self, data: &TaskDataset, indices: &[usize], theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.param_dim()];
        for &i in indices {
            let x = data.input(i);
            let y = data.target(i);
            let mass: f64 = y.iter().sum();
            let p = self.predict(x, theta);
            let g: Vec<f64> = p.iter().zip(y).map(|(pk, yk)| mass * pk - yk).collect();
            self.accumulate(&mut out, &g, x);
        }
        let n = indices.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    fn predict_vjp(&self, x: &[f64], theta: &[f64], w: &[f64]) -> Vec<f64> {
        let p = self.predict(x, theta);
        let pw = linalg::dot(&p, w);
        let g: Vec<f64> = p.iter().zip(w).map(|(pk, wk)| pk * (wk - pw)).collect();
        let mut out = vec![0.0; self.param_dim()];
        self.accumulate(&mut out, &g, x);
        out
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    best
}

/// Top-1 accuracy in percent.
pub fn accuracy(model: &SoftmaxModel, data: &TaskDataset, theta: &[f64]) -> f64 {
    let hits = (0..data.n_samples())
        .filter(|&i| argmax(&model.predict(data.input(i), theta)) == argmax(data.target(i)))
        .count();
    100.0 * hits as f64 / data.n_samples() as f64
}

/// Splits each class of `data` into train/test with `ratio` of it (rounded)
/// in training, keeping at least one sample on each side when the class has
/// two or more.
pub fn stratified_split(data: &TaskDataset, ratio: f64, seed: u64) -> Result<(TaskDataset, TaskDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.target_dim()];
    for i in 0..data.n_samples() {
        by_class[argmax(data.target(i))].push(i);
    }
    let mut g = rng::seeded(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut idx in by_class {
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut g);
        let n = idx.len();
        let mut k = (ratio * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(invalid(format!("task {} is too small to split", data.task_id)));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&train)?, data.subset(&test)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    /// Held-out accuracy per domain, percent.
    pub accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub separate: SweepRow,
    pub consensus: SweepRow,
}

impl SweepResult {
    pub fn row(&self, eps: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.epsilon == eps)
    }

    /// Grid row with the highest mean accuracy (first on ties).
    pub fn best_row(&self) -> &SweepRow {
        let mut best = &self.rows[0];
        for r in &self.rows {
            if r.mean_accuracy > best.mean_accuracy {
                best = r;
            }
        }
        best
    }

    /// Writes a comment line explaining the sentinels, then
    /// `epsilon,acc_mean,acc_d1..acc_dT,lambda_1..lambda_T` with the grid
    /// rows followed by the separate and consensus baselines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# epsilon {SEPARATE_SENTINEL} = separate baseline, {CONSENSUS_SENTINEL} = consensus baseline"
        )?;
        let t = self.separate.accuracy.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["epsilon".to_string(), "acc_mean".into()];
        header.extend((1..=t).map(|i| format!("acc_d{i}")));
        header.extend((1..=t).map(|i| format!("lambda_{i}")));
        w.write_record(&header)?;
        for r in self.rows.iter().chain([&self.separate, &self.consensus]) {
            let mut rec = vec![r.epsilon.to_string(), r.mean_accuracy.to_string()];
            rec.extend(r.accuracy.iter().map(|a| a.to_string()));
            rec.extend(r.duals.iter().map(|l| l.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn consensus_train(train: &[TaskDataset], model: &SoftmaxModel, cfg: &PrimalDualConfig) -> Vec<f64> {
    let t = train.len() as f64;
    let max_n = train.iter().map(TaskDataset::n_samples).max().unwrap_or(0);
    let steps = if cfg.batch_size == 0 { 1 } else { max_n.div_ceil(cfg.batch_size) };
    let mut g = rng::seeded(cfg.seed);
    let mut theta = vec![0.0; model.param_dim()];
    for _ in 0..cfg.epochs {
        let perms: Vec<Vec<usize>> = train
            .iter()
            .map(|d| {
                let mut p = d.all_indices();
                if cfg.batch_size > 0 {
                    p.shuffle(&mut g);
                }
                p
            })
            .collect();
        for step in 0..steps {
            let mut grad = vec![0.0; theta.len()];
            for (d, perm) in train.iter().zip(&perms) {
                let batch: Vec<usize> = if cfg.batch_size == 0 {
                    perm.clone()
                } else {
                    (0..cfg.batch_size).map(|j| perm[(step * cfg.batch_size + j) % d.n_samples()]).collect()
                };
                linalg::axpy(1.0 / t, &model.grad_on(d, &batch, &theta), &mut grad);
            }
            linalg::axpy(-cfg.eta_p, &grad, &mut theta);
        }
    }
    theta
}

fn row_for(epsilon: f64, model: &SoftmaxModel, test: &[TaskDataset], thetas: &[Vec<f64>], duals: Vec<f64>) -> SweepRow {
    let accuracy: Vec<f64> = test.iter().zip(thetas).map(|(d, th)| accuracy(model, d, th)).collect();
    let mean_accuracy = accuracy.iter().sum::<f64>() / accuracy.len() as f64;
    SweepRow {
        epsilon,
        accuracy,
        mean_accuracy,
        duals,
    }
}

/// Trains on a stratified split of every domain for each radius of
/// `eps_grid` and for the two baselines, and scores each domain's own model
/// on its held-out part.
///
/// The separate baseline is the same primal-dual run with an infinite
/// radius; the consensus baseline is one model trained on the average of
/// the domain losses with the same batches and step size.
pub fn train_eval_sweep(
    datasets: &[TaskDataset],
    eps_grid: &[f64],
    cfg: &PrimalDualConfig,
    split_ratio: f64,
    seed: u64,
) -> Result<SweepResult> {
    if datasets.len() < 2 {
        return Err(invalid("at least two domains are required"));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e >= 0.0)) {
        return Err(invalid("the radius grid must be nonempty and nonnegative"));
    }
    let dim = datasets[0].input_dim();
    let classes = datasets[0].target_dim();
    if datasets.iter().any(|d| d.input_dim() != dim || d.target_dim() != classes) {
        return Err(invalid("domains disagree on input or class dimension"));
    }
    let model = SoftmaxModel::new(dim, classes);
    let (train, test): (Vec<_>, Vec<_>) = datasets
        .iter()
        .enumerate()
        .map(|(t, d)| stratified_split(d, split_ratio, seed.wrapping_add(t as u64)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    cfg.validate(&train)?;
    let t = datasets.len();
    let init = ParamBundle::zeros(t, model.param_dim());

    let runs: Vec<SweepRow> = eps_grid
        .iter()
        .copied()
        .chain([f64::INFINITY])
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&eps| {
            let rep = primal_dual_solve(&train, &model, eps, cfg, &init).map_err(|e| invalid(format!("radius {eps}: {e}")))?;
            let label = if eps.is_infinite() { SEPARATE_SENTINEL } else { eps };
            Ok(row_for(label, &model, &test, &rep.final_bundle.per_task, rep.duals))
        })
        .collect::<Result<_>>()?;
    let mut rows = runs;
    let separate = rows.pop().expect("separate run present");
    let shared = consensus_train(&train, &model, cfg);
    let consensus = row_for(CONSENSUS_SENTINEL, &model, &test, &vec![shared; t], vec![0.0; t]);
    Ok(SweepResult {
        rows,
        separate,
        consensus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualProfile {
    /// `(domain, λ_t)` sorted by decreasing `λ_t`, domain index on ties.
    pub entries: Vec<(usize, f64)>,
    /// Domains whose constraint is active (`λ_t > 0`).
    pub active: Vec<usize>,
}

pub fn dual_profile(result: &SweepResult, eps: f64) -> Result<DualProfile> {
    let row = result
        .row(eps)
        .ok_or_else(|| invalid(format!("radius {eps} is not part of the sweep")))?;
    let mut entries: Vec<(usize, f64)> = row.duals.iter().copied().enumerate().collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let active = entries.iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect();
    Ok(DualProfile { entries, active })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff::{central_gradient, max_relative_error};

    fn sample() -> (SoftmaxModel, TaskDataset, Vec<f64>) {
        let m = SoftmaxModel::new(2, 3);
        let d = TaskDataset::new(
            0,
            vec![vec![0.5, -1.0], vec![1.5, 0.2], vec![-0.3, 0.7]],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]],
        )
        .unwrap();
        let theta = vec![0.3, -0.2, 0.1, 0.4, -0.5, 0.25, 0.05, -0.1, 0.2];
        (m, d, theta)
    }

    #[test]
    fn probabilities() {
        let (m, _, theta) = sample();
        let p = m.predict(&[100.0, -40.0], &theta);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (m, d, theta) = sample();
        let fd = central_gradient(|th| m.empirical_loss(&d, th), &theta, 1e-6);
        assert!(max_relative_error(&m.grad(&d, &theta), &fd, 1e-8) < 1e-4);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let (m, _, theta) = sample();
        let x = [0.4, -0.9];
        let w = [1.0, -1.0, 0.5];
        let fd = central_gradient(|th| linalg::dot(&m.predict(&x, th), &w), &theta, 1e-6);
        assert!(max_relative_error(&m.predict_vjp(&x, &theta, &w), &fd, 1e-8) < 1e-4);
    }

    #[test]
    fn loss_vanishes_on_own_prediction() {
        let (m, _, _) = sample();
        assert_eq!(m.loss(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]), 0.0);
        assert!(m.loss(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).abs() < 1e-15);
    }

    #[test]
    fn ties_pick_lowest_class() {
        assert_eq!(argmax(&[0.5, 0.5, 0.0]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn split_is_stratified() {
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let targets: Vec<Vec<f64>> = (0..20).map(|i| if i < 10 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
        let d = TaskDataset::new(0, inputs, targets).unwrap();
        let (tr, te) = stratified_split(&d, 0.8, 1).unwrap();
        assert_eq!((tr.n_samples(), te.n_samples()), (16, 4));
        assert_eq!(te.targets().iter().filter(|y| y[0] == 1.0).count(), 2);
    }
}
