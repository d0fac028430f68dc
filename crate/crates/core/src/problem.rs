//! Multi-task problem description shared by every estimator.
//!
//! A problem is a collection of [`TaskDataset`]s, one parametric model
//! implementing [`LossModel`], and a joint decision variable
//! [`ParamBundle`] holding one parameter vector per task plus a centroid.
//! The operations here are the separable objective, the two coupling
//! measures (parametric ball slack and functional output gap) and the
//! squared-error metrics against known ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::linalg;

/// Supervised samples of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_id: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl TaskDataset {
    pub fn new(task_id: usize, inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(invalid(format!("task {task_id}: dataset has no samples")));
        }
        check_len("dataset targets", inputs.len(), targets.len())?;
        let p = inputs[0].len();
        let q = targets[0].len();
        for (x, y) in inputs.iter().zip(&targets) {
            check_len("dataset input dimension", p, x.len())?;
            check_len("dataset target dimension", q, y.len())?;
            if !linalg::all_finite(x) || !linalg::all_finite(y) {
                return Err(invalid(format!("task {task_id}: non-finite sample")));
            }
        }
        Ok(Self {
            task_id,
            inputs,
            targets,
        })
    }

    /// Dataset for an input-free model such as the constant regressor.
    pub fn from_targets(task_id: usize, targets: Vec<Vec<f64>>) -> Result<Self> {
        let inputs = vec![Vec::new(); targets.len()];
        Self::new(task_id, inputs, targets)
    }

    pub fn n_samples(&self) -> usize {
        self.inputs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn target_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i]
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.n_samples()).collect()
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.task_id,
            indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            indices.iter().map(|&i| self.targets[i].clone()).collect(),
        )
    }
}

/// Per-task parameters `θ_1..θ_T` together with the centroid `θ_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBundle {
    pub per_task: Vec<Vec<f64>>,
    pub centroid: Vec<f64>,
}

impl ParamBundle {
    pub fn new(per_task: Vec<Vec<f64>>, centroid: Vec<f64>) -> Result<Self> {
        if per_task.is_empty() {
            return Err(invalid("parameter bundle needs at least one task"));
        }
        let s = centroid.len();
        for theta in &per_task {
            check_len("bundle parameter dimension", s, theta.len())?;
        }
        let bundle = Self { per_task, centroid };
        if !bundle.is_finite() {
            return Err(invalid("parameter bundle has non-finite coordinates"));
        }
        Ok(bundle)
    }

    pub fn zeros(n_tasks: usize, dim: usize) -> Self {
        Self {
            per_task: vec![vec![0.0; dim]; n_tasks],
            centroid: vec![0.0; dim],
        }
    }

    /// Every task and the centroid set to `theta`.
    pub fn uniform(n_tasks: usize, theta: &[f64]) -> Self {
        Self {
            per_task: vec![theta.to_vec(); n_tasks],
            centroid: theta.to_vec(),
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.per_task.len()
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.centroid) && self.per_task.iter().all(|t| linalg::all_finite(t))
    }

    /// Joint vector `(θ_1, …, θ_T, θ_g)`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.n_tasks() + 1) * self.dim());
        for t in &self.per_task {
            out.extend_from_slice(t);
        }
        out.extend_from_slice(&self.centroid);
        out
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.flatten())
    }

    /// Euclidean distance between two bundles in the joint space.
    pub fn distance(&self, other: &ParamBundle) -> f64 {
        linalg::dist(&self.flatten(), &other.flatten())
    }

    pub fn max_abs_diff(&self, other: &ParamBundle) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// `‖θ_t − θ_g‖ ≤ ε`
    Parametric,
    /// `(1/N_t) Σ_i ‖f(x_i, θ_t) − f(x_i, θ_g)‖₁ ≤ ε`
    Functional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub epsilon: f64,
}

impl ConstraintSpec {
    pub fn new(kind: ConstraintKind, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(invalid(format!("centrality radius must be >= 0, got {epsilon}")));
        }
        Ok(Self { kind, epsilon })
    }
}

/// A parametric model `f(x, θ)` together with its pointwise loss.
///
/// Implementations must satisfy `loss(y, y) = 0`, `loss ≥ 0`, and provide
/// a gradient of the empirical loss that agrees with central finite
/// differences.
pub trait LossModel: Send + Sync {
    /// Parameter dimension `S`.
    fn param_dim(&self) -> usize;

    /// Output dimension `Q`.
    fn output_dim(&self) -> usize;

    fn predict(&self, x: &[f64], theta: &[f64]) -> Vec<f64>;

    fn loss(&self, y: &[f64], y_hat: &[f64]) -> f64;

    /// Mean loss over the samples at `indices`.
    fn empirical_loss_on(&self, data: &TaskDataset, indices: &[usize], theta: &[f64]) -> f64 {
        let total: f64 = indices
            .iter()
            .map(|&i| self.loss(data.target(i), &self.predict(data.input(i), theta)))
            .sum();
        total / indices.len() as f64
    }

    /// Gradient of [`LossModel::empirical_loss_on`] with respect to `θ`.
    fn grad_on(&self, data: &TaskDataset, indices: &[usize], theta: &[f64]) -> Vec<f64>;

    /// Vector-Jacobian product `J_θ f(x, θ)ᵀ w`.
    fn predict_vjp(&self, x: &[f64], theta: &[f64], w: &[f64]) -> Vec<f64>;

    /// Maps `θ` back into the admissible parameter domain (identity by default).
    fn project_params(&self, _theta: &mut [f64]) {}

    fn empirical_loss(&self, data: &TaskDataset, theta: &[f64]) -> f64 {
        self.empirical_loss_on(data, &data.all_indices(), theta)
    }

    fn grad(&self, data: &TaskDataset, theta: &[f64]) -> Vec<f64> {
        self.grad_on(data, &data.all_indices(), theta)
    }
}

/// Squared errors of the separate, consensus and cross-learning estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTriple {
    pub e_separate: f64,
    pub e_consensus: f64,
    pub e_crosslearn: f64,
}

fn check_bundle(datasets: &[TaskDataset], bundle: &ParamBundle, model: &dyn LossModel) -> Result<()> {
    check_len("number of tasks", bundle.n_tasks(), datasets.len())?;
    check_len("model parameter dimension", model.param_dim(), bundle.dim())
}

/// `(1/T) Σ_t (1/N_t) Σ_i ℓ(y_i, f(x_i, θ_t))`.
pub fn empirical_objective(
    datasets: &[TaskDataset],
    bundle: &ParamBundle,
    model: &dyn LossModel,
) -> Result<f64> {
    check_bundle(datasets, bundle, model)?;
    let total: f64 = datasets
        .iter()
        .zip(&bundle.per_task)
        .map(|(d, theta)| model.empirical_loss(d, theta))
        .sum();
    Ok(total / datasets.len() as f64)
}

/// Ball slacks `‖θ_t − θ_g‖ − ε`; the bundle is feasible iff all are `≤ 0`.
pub fn parametric_slacks(bundle: &ParamBundle, eps: f64) -> Vec<f64> {
    bundle
        .per_task
        .iter()
        .map(|theta| linalg::dist(theta, &bundle.centroid) - eps)
        .collect()
}

/// Mean ℓ1 output difference over the samples at `indices`.
pub fn functional_gap_on(
    data: &TaskDataset,
    indices: &[usize],
    theta_t: &[f64],
    theta_g: &[f64],
    model: &dyn LossModel,
) -> f64 {
    let total: f64 = indices
        .iter()
        .map(|&i| {
            let x = data.input(i);
            let ft = model.predict(x, theta_t);
            let fg = model.predict(x, theta_g);
            ft.iter().zip(&fg).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .sum();
    total / indices.len() as f64
}

/// `(1/N_t) Σ_i ‖f(x_i, θ_t) − f(x_i, θ_g)‖₁`.
pub fn functional_gap(
    data: &TaskDataset,
    theta_t: &[f64],
    theta_g: &[f64],
    model: &dyn LossModel,
) -> f64 {
    functional_gap_on(data, &data.all_indices(), theta_t, theta_g, model)
}

/// `(1/T) Σ_t ‖θ̂_t − θ_t★‖²`.
pub fn mean_squared_error(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    check_len("ground truth tasks", estimates.len(), truth.len())?;
    let total: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| linalg::dist_sq(e, t))
        .sum();
    Ok(total / truth.len() as f64)
}

/// Errors of the three estimators against the data-generating parameters.
///
/// `consensus` is the single shared estimate, compared against every task's
/// truth.
pub fn error_metrics(
    separate: &[Vec<f64>],
    consensus: &[f64],
    crosslearn: &ParamBundle,
    truth: &[Vec<f64>],
) -> Result<ErrorTriple> {
    let t = truth.len() as f64;
    check_len("ground truth tasks", separate.len(), truth.len())?;
    let e_consensus = truth.iter().map(|th| linalg::dist_sq(consensus, th)).sum::<f64>() / t;
    Ok(ErrorTriple {
        e_separate: mean_squared_error(separate, truth)?,
        e_consensus,
        e_crosslearn: mean_squared_error(&crosslearn.per_task, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConstantModel, LinearModel};

    fn scalar_task(id: usize, ys: &[f64]) -> TaskDataset {
        TaskDataset::from_targets(id, ys.iter().map(|&y| vec![y]).collect()).unwrap()
    }

    #[test]
    fn objective_two_point_example() {
        let d = vec![scalar_task(0, &[0.0, 2.0])];
        let b = ParamBundle::uniform(1, &[1.0]);
        let v = empirical_objective(&d, &b, &ConstantModel::new(1)).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn objective_at_sample_means_is_mean_variance() {
        let a = [1.0, 2.0, 6.0];
        let b = [-1.0, 3.0];
        let d = vec![scalar_task(0, &a), scalar_task(1, &b)];
        let mean_a = 3.0;
        let mean_b = 1.0;
        let var_a = a.iter().map(|x| (x - mean_a) * (x - mean_a)).sum::<f64>() / 3.0;
        let var_b = b.iter().map(|x| (x - mean_b) * (x - mean_b)).sum::<f64>() / 2.0;
        let bundle = ParamBundle::new(vec![vec![mean_a], vec![mean_b]], vec![0.0]).unwrap();
        let v = empirical_objective(&d, &bundle, &ConstantModel::new(1)).unwrap();
        assert!((v - (var_a + var_b) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn objective_zero_when_predictions_match() {
        let d = vec![scalar_task(0, &[4.0, 4.0]), scalar_task(1, &[-2.0])];
        let bundle = ParamBundle::new(vec![vec![4.0], vec![-2.0]], vec![0.0]).unwrap();
        assert_eq!(empirical_objective(&d, &bundle, &ConstantModel::new(1)).unwrap(), 0.0);
    }

    #[test]
    fn objective_rejects_dimension_mismatch() {
        let d = vec![scalar_task(0, &[1.0])];
        let b = ParamBundle::uniform(1, &[1.0, 2.0]);
        assert!(empirical_objective(&d, &b, &ConstantModel::new(1)).is_err());
        let b2 = ParamBundle::uniform(2, &[1.0]);
        assert!(empirical_objective(&d, &b2, &ConstantModel::new(1)).is_err());
    }

    #[test]
    fn slacks() {
        let b = ParamBundle::uniform(3, &[1.0, -1.0]);
        assert_eq!(parametric_slacks(&b, 0.3), vec![-0.3; 3]);
        assert_eq!(parametric_slacks(&b, 0.0), vec![0.0; 3]);
        let b = ParamBundle::new(vec![vec![1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(parametric_slacks(&b, 0.5), vec![0.5]);
    }

    #[test]
    fn gap_linear_single_sample() {
        let model = LinearModel::new(2, 1);
        let d = TaskDataset::new(0, vec![vec![1.0, 1.0]], vec![vec![0.0]]).unwrap();
        let g = functional_gap(&d, &[0.1, -0.2], &[0.0, 0.0], &model);
        assert!((g - 0.1).abs() < 1e-15);
        assert_eq!(functional_gap(&d, &[0.3, 0.3], &[0.3, 0.3], &model), 0.0);
    }

    #[test]
    fn error_metric_examples() {
        let truth = vec![vec![0.0], vec![2.0]];
        let b = ParamBundle::new(truth.clone(), vec![1.0]).unwrap();
        let e = error_metrics(&truth, &[1.0], &b, &truth).unwrap();
        assert_eq!(e.e_separate, 0.0);
        assert_eq!(e.e_crosslearn, 0.0);
        assert_eq!(e.e_consensus, 1.0);
    }

    #[test]
    fn bundle_validation() {
        assert!(ParamBundle::new(vec![], vec![0.0]).is_err());
        assert!(ParamBundle::new(vec![vec![0.0, 1.0]], vec![0.0]).is_err());
        assert!(ParamBundle::new(vec![vec![f64::NAN]], vec![0.0]).is_err());
        assert!(ConstraintSpec::new(ConstraintKind::Parametric, -1.0).is_err());
        assert!(TaskDataset::new(0, vec![], vec![]).is_err());
        assert!(TaskDataset::new(0, vec![vec![1.0], vec![1.0, 2.0]], vec![vec![0.0], vec![0.0]]).is_err());
    }
}
