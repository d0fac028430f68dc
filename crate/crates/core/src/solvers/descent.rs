//! Projected gradient descent with Armijo backtracking.
//!
//! Trial steps start from the Barzilai–Borwein estimate `sᵀs / sᵀy` of the
//! previous iteration and are halved until the Armijo condition
//! `f(x⁺) ≤ f(x) + c ∇f(x)ᵀ(x⁺ − x)` holds. Non-finite trial values count as
//! failures, which is what makes the loop safe on losses that blow up
//! outside a trust region (the SIR integrator, softmax logits).
//! Close to a minimizer the Armijo decrease falls below the resolution of
//! `f`, so increases of a few ulps are tolerated and, when a Lipschitz
//! constant of the gradient is known, short enough steps are taken
//! unconditionally.

use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    pub max_iters: usize,
    /// Stop once `‖x − P(x − ∇f(x))‖` falls below this.
    pub grad_tol: f64,
    /// Stop once an accepted step satisfies `‖x⁺ − x‖ ≤ step_tol (1 + ‖x‖)`; 0 disables.
    pub step_tol: f64,
    pub armijo: f64,
    /// First trial step; `None` picks one moving `x` by ~10% of its scale.
    pub initial_step: Option<f64>,
    /// Known Lipschitz constant `L` of `∇f`. Steps no longer than `1/L`
    /// satisfy the Armijo condition in exact arithmetic and are accepted
    /// without comparing `f`, which keeps progress going once `f` is too
    /// flat to resolve.
    pub lipschitz: Option<f64>,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            step_tol: 0.0,
            armijo: 1e-4,
            initial_step: None,
            lipschitz: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Projected-gradient norm at `x`.
    pub stationarity: f64,
    /// Step length that was accepted last; reusable as a warm start.
    pub last_step: f64,
    pub converged: bool,
}

const MAX_HALVINGS: usize = 80;

fn stationarity(x: &[f64], g: &[f64], project: &impl Fn(&mut [f64])) -> f64 {
    let mut trial: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gi).collect();
    project(&mut trial);
    linalg::dist(x, &trial)
}

pub fn minimize<F, G, P>(f: F, grad: G, project: P, x0: &[f64], opts: &DescentOptions) -> DescentOutcome
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&mut [f64]),
{
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut step = opts.initial_step.unwrap_or_else(|| {
        let gn = linalg::norm(&g);
        if gn > 0.0 {
            0.1 * (1.0 + linalg::norm(&x)) / gn
        } else {
            1.0
        }
    });
    let mut trial = vec![0.0; x.len()];
    let mut iterations = 0;
    let mut pg = stationarity(&x, &g, &project);

    while iterations < opts.max_iters {
        if pg <= opts.grad_tol {
            return DescentOutcome { x, value: fx, iterations, stationarity: pg, last_step: step, converged: true };
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for ((ti, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
                *ti = xi - step * gi;
            }
            project(&mut trial);
            let ft = f(&trial);
            let decrease: f64 = g.iter().zip(&trial).zip(&x).map(|((gi, ti), xi)| gi * (ti - xi)).sum();
            // slack of a few ulps so that steps near the optimum are not
            // rejected on rounding noise alone
            let slack = 4.0 * f64::EPSILON * fx.abs();
            let safe = opts.lipschitz.is_some_and(|l| step * l <= 1.0);
            if ft.is_finite() && (safe || ft <= fx + opts.armijo * decrease + slack) {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(ft) = accepted else {
            break;
        };
        iterations += 1;
        let g_new = grad(&trial);
        let s = linalg::sub(&trial, &x);
        let y = linalg::sub(&g_new, &g);
        let small_step = linalg::norm(&s) <= opts.step_tol * (1.0 + linalg::norm(&x));
        std::mem::swap(&mut x, &mut trial);
        fx = ft;
        g = g_new;
        pg = stationarity(&x, &g, &project);
        if small_step {
            return DescentOutcome { x, value: fx, iterations, stationarity: pg, last_step: step, converged: true };
        }
        let sy = linalg::dot(&s, &y);
        if sy > 0.0 {
            step = linalg::norm_sq(&s) / sy;
        } else {
            step *= 2.0;
        }
    }
    let converged = pg <= opts.grad_tol;
    DescentOutcome { x, value: fx, iterations, stationarity: pg, last_step: step, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ill_conditioned_quadratic() {
        let f = |x: &[f64]| 0.5 * (x[0] * x[0] + 1e4 * x[1] * x[1]);
        let g = |x: &[f64]| vec![x[0], 1e4 * x[1]];
        let out = minimize(f, g, |_x: &mut [f64]| {}, &[3.0, 1.0], &DescentOptions { max_iters: 5000, grad_tol: 1e-10, ..Default::default() });
        assert!(out.converged);
        assert!(out.x[0].abs() < 1e-9 && out.x[1].abs() < 1e-12);
    }

    #[test]
    fn respects_projection() {
        let f = |x: &[f64]| (x[0] + 1.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] + 1.0)];
        let out = minimize(f, g, |x: &mut [f64]| x[0] = x[0].max(0.0), &[2.0], &DescentOptions::default());
        assert!(out.converged);
        assert_eq!(out.x[0], 0.0);
    }

    #[test]
    fn non_finite_region_is_backtracked() {
        let f = |x: &[f64]| if x[0] > 1.5 { f64::INFINITY } else { (x[0] - 1.0).powi(2) };
        let g = |x: &[f64]| vec![2.0 * (x[0] - 1.0)];
        let out = minimize(f, g, |_x: &mut [f64]| {}, &[-10.0], &DescentOptions { initial_step: Some(100.0), ..Default::default() });
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-8);
    }
}
