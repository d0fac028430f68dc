//! Closed-form loss models: the constant regressor and the linear map.

use crate::linalg;
use crate::problem::{LossModel, TaskDataset};

/// `f(x, θ) = θ` with squared loss `‖y − θ‖²`; inputs are ignored.
#[derive(Debug, Clone, Copy)]
pub struct ConstantModel {
    dim: usize,
}

impl ConstantModel {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LossModel for ConstantModel {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, _x: &[f64], theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }

    fn loss(&self, y: &[f64], y_hat: &[f64]) -> f64 {
        linalg::dist_sq(y, y_hat)
    }

    fn grad_on(&self, data: &TaskDataset, indices: &[usize], theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for &i in indices {
            for ((gj, tj), yj) in g.iter_mut().zip(theta).zip(data.target(i)) {
                *gj += 2.0 * (tj - yj);
            }
        }
        let n = indices.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    fn predict_vjp(&self, _x: &[f64], _theta: &[f64], w: &[f64]) -> Vec<f64> {
        w.to_vec()
    }
}

/// `f(x, θ) = W x` with `W ∈ R^{Q×P}` stored row-major in `θ`, squared loss.
#[derive(Debug, Clone, Copy)]
pub struct LinearModel {
    inputs: usize,
    outputs: usize,
}

impl LinearModel {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs }
    }

    /// Lipschitz constant of `θ ↦ f(x, θ)` from the Euclidean parameter norm
    /// to the ℓ1 output norm, uniformly over the dataset:
    /// `‖ΔW x‖₁ ≤ √Q ‖ΔW x‖₂ ≤ √Q ‖ΔW‖_F ‖x‖₂`.
    pub fn lipschitz_bound(&self, data: &TaskDataset) -> f64 {
        let max_x = data
            .inputs()
            .iter()
            .map(|x| linalg::norm(x))
            .fold(0.0, f64::max);
        (self.outputs as f64).sqrt() * max_x
    }
}

impl LossModel for LinearModel {
    fn param_dim(&self) -> usize {
        self.inputs * self.outputs
    }

    fn output_dim(&self) -> usize {
        self.outputs
    }

    fn predict(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        theta
            .chunks_exact(self.inputs)
            .map(|row| linalg::dot(row, x))
            .collect()
    }

    fn loss(&self, y: &[f64], y_hat: &[f64]) -> f64 {
        linalg::dist_sq(y, y_hat)
    }

    fn grad_on(&self, data: &TaskDataset, indices: &[usize], theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_dim()];
        for &i in indices {
            let x = data.input(i);
            let residual = linalg::sub(&self.predict(x, theta), data.target(i));
            let contrib = self.predict_vjp(x, theta, &residual);
            linalg::axpy(2.0, &contrib, &mut g);
        }
        let n = indices.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    fn predict_vjp(&self, x: &[f64], _theta: &[f64], w: &[f64]) -> Vec<f64> {
        w.iter()
            .flat_map(|&wq| x.iter().map(move |&xp| wq * xp))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff::{central_gradient, max_relative_error};
    use crate::rng;

    fn random_linear_task(seed: u64, n: usize, p: usize, q: usize) -> TaskDataset {
        let mut r = rng::seeded(seed);
        TaskDataset::new(
            0,
            (0..n).map(|_| rng::normal_vec(&mut r, p)).collect(),
            (0..n).map(|_| rng::normal_vec(&mut r, q)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn loss_is_zero_on_targets() {
        let m = ConstantModel::new(3);
        assert_eq!(m.loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        let l = LinearModel::new(2, 2);
        assert_eq!(l.loss(&[1.0, -2.0], &[1.0, -2.0]), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let data = random_linear_task(11, 7, 3, 2);
        let lin = LinearModel::new(3, 2);
        let mut r = rng::seeded(5);
        for _ in 0..5 {
            let theta = rng::normal_vec(&mut r, 6);
            let fd = central_gradient(|t| lin.empirical_loss(&data, t), &theta, 1e-6);
            assert!(max_relative_error(&lin.grad(&data, &theta), &fd, 1e-3) < 1e-4);
        }
        let cdata = TaskDataset::from_targets(0, data.targets().to_vec()).unwrap();
        let cm = ConstantModel::new(2);
        let theta = rng::normal_vec(&mut r, 2);
        let fd = central_gradient(|t| cm.empirical_loss(&cdata, t), &theta, 1e-6);
        assert!(max_relative_error(&cm.grad(&cdata, &theta), &fd, 1e-3) < 1e-4);
    }

    #[test]
    fn vjp_matches_finite_difference_jacobian() {
        let lin = LinearModel::new(3, 2);
        let x = [0.5, -1.0, 2.0];
        let theta = [0.1, 0.2, 0.3, -0.4, 0.5, 0.6];
        let w = [1.5, -0.5];
        let fd = central_gradient(|t| linalg::dot(&lin.predict(&x, t), &w), &theta, 1e-6);
        assert!(max_relative_error(&lin.predict_vjp(&x, &theta, &w), &fd, 1e-3) < 1e-6);
    }
}
