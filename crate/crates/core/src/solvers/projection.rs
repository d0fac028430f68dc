//! Euclidean projection onto the coupled-ball set
//! `C = {(z_1..z_T, z_g) : ‖z_t − z_g‖ ≤ ε ∀t}`.
//!
//! For a fixed centre the optimal `z_t` is the ball projection of `v_t`, so
//! the joint projection reduces to the strongly convex, C¹ problem in the
//! centre alone
//!
//! `h(z_g) = ‖z_g − v_g‖² + Σ_t max(0, ‖v_t − z_g‖ − ε)²`.
//!
//! Dropping the anchor term gives the reduced objective of the Gaussian
//! cross-learning estimator; both share [`minimize_centroid`].

use super::descent::{self, DescentOptions};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::problem::{parametric_slacks, ParamBundle};

pub(crate) const CENTROID_MAX_ITERS: usize = 100_000;

pub(crate) struct CentroidProblem<'a> {
    pub points: &'a [Vec<f64>],
    pub anchor: Option<&'a [f64]>,
    pub eps: f64,
}

impl CentroidProblem<'_> {
    pub fn value(&self, z: &[f64]) -> f64 {
        let mut v = self.anchor.map_or(0.0, |a| linalg::dist_sq(z, a));
        for p in self.points {
            let excess = (linalg::dist(p, z) - self.eps).max(0.0);
            v += excess * excess;
        }
        v
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = match self.anchor {
            Some(a) => linalg::sub(z, a).into_iter().map(|x| 2.0 * x).collect(),
            None => vec![0.0; z.len()],
        };
        for p in self.points {
            let d = linalg::dist(p, z);
            if d > self.eps {
                let w = 2.0 * (d - self.eps) / d;
                for ((gi, zi), pi) in g.iter_mut().zip(z).zip(p) {
                    *gi += w * (zi - pi);
                }
            }
        }
        g
    }
}

/// Minimizes the centre objective from `init` until the gradient norm drops
/// below `tol`. Returns the centre and the number of iterations used.
pub(crate) fn minimize_centroid(problem: &CentroidProblem<'_>, init: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
    // every term of the objective has a 2-Lipschitz gradient
    let lipschitz = 2.0 * (problem.points.len() + problem.anchor.is_some() as usize) as f64;
    let opts = DescentOptions {
        max_iters: CENTROID_MAX_ITERS,
        grad_tol: tol,
        step_tol: 0.0,
        armijo: 1e-4,
        initial_step: Some(1.0 / lipschitz),
        lipschitz: Some(lipschitz),
    };
    let out = descent::minimize(|z| problem.value(z), |z| problem.gradient(z), |_z: &mut [f64]| {}, init, &opts);
    if out.converged {
        Ok((out.x, out.iterations))
    } else {
        Err(Error::NonConvergence {
            solver: "centroid descent",
            iterations: out.iterations,
            residual: out.stationarity,
        })
    }
}

/// `argmin_z Σ_t ‖z_t − v_t‖² + ‖z_g − v_g‖²` subject to `‖z_t − z_g‖ ≤ ε`.
///
/// Feasible inputs are returned unchanged; `ε = 0` collapses every block to
/// the mean of `(v_g, v_1, …, v_T)`. Otherwise the centre is found by
/// descent on `h` with stationarity tolerance `tol`.
pub fn project_coupled_ball(v: &ParamBundle, eps: f64, tol: f64) -> Result<ParamBundle> {
    if !(eps >= 0.0) {
        return Err(invalid(format!("centrality radius must be >= 0, got {eps}")));
    }
    if parametric_slacks(v, eps).iter().all(|&s| s <= 0.0) {
        return Ok(v.clone());
    }
    if eps == 0.0 {
        let mut all = v.per_task.clone();
        all.push(v.centroid.clone());
        let m = linalg::mean(&all);
        return Ok(ParamBundle::uniform(v.n_tasks(), &m));
    }
    let problem = CentroidProblem {
        points: &v.per_task,
        anchor: Some(&v.centroid),
        eps,
    };
    let (centre, _) = minimize_centroid(&problem, &v.centroid, tol)?;
    let per_task = v
        .per_task
        .iter()
        .map(|p| linalg::project_ball(p, &centre, eps))
        .collect();
    Ok(ParamBundle {
        per_task,
        centroid: centre,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_input_unchanged() {
        let v = ParamBundle::new(vec![vec![0.1, 0.0], vec![0.0, -0.2]], vec![0.0, 0.0]).unwrap();
        assert_eq!(project_coupled_ball(&v, 0.5, 1e-12).unwrap(), v);
    }

    #[test]
    fn single_task_line() {
        // minimize a² + (2−b)² with b − a = 1
        let v = ParamBundle::new(vec![vec![2.0, 0.0]], vec![0.0, 0.0]).unwrap();
        let p = project_coupled_ball(&v, 1.0, 1e-13).unwrap();
        assert!((p.centroid[0] - 0.5).abs() < 1e-10 && p.centroid[1].abs() < 1e-12);
        assert!((p.per_task[0][0] - 1.5).abs() < 1e-10 && p.per_task[0][1].abs() < 1e-12);
    }

    #[test]
    fn zero_radius_is_mean() {
        let v = ParamBundle::new(vec![vec![3.0], vec![-1.0]], vec![1.0]).unwrap();
        let p = project_coupled_ball(&v, 0.0, 1e-12).unwrap();
        assert_eq!(p, ParamBundle::uniform(2, &[1.0]));
    }

    #[test]
    fn negative_radius_rejected() {
        let v = ParamBundle::uniform(1, &[0.0]);
        assert!(project_coupled_ball(&v, -0.1, 1e-12).is_err());
    }
}
