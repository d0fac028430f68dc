//! The constant-regressor model under Gaussian noise.
//!
//! With `y_tn = θ_t★ + η_tn`, the task means `θ̂_t` are sufficient, the
//! consensus estimate is their plain average, and the cross-learning
//! problem `min Σ‖θ̂_t − θ_t‖²` subject to `‖θ_t − θ_g‖ ≤ ε` reduces to the
//! convex, C¹ centroid objective `g(θ_g) = Σ max(0, ‖θ̂_t − θ_g‖ − ε)²`, with
//! each `θ_t` the projection of `θ̂_t` onto the ball `B(θ_g, ε)`.
//!
//! The Monte Carlo harnesses run trial `i` on substream `seed + i` and reduce
//! in trial order, so results do not depend on the rayon pool size.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::synth::{check_gaussian, draw_gaussian_samples};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::problem::{mean_squared_error, ParamBundle, TaskDataset};
use crate::rng::{self, Rng};
use crate::solvers::projection::{minimize_centroid, CentroidProblem};
use crate::stats;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianScenario {
    pub truth: Vec<Vec<f64>>,
    pub sigma: f64,
    pub n_per_task: Vec<usize>,
    pub seed: u64,
}

impl GaussianScenario {
    pub fn new(truth: Vec<Vec<f64>>, sigma: f64, n_per_task: Vec<usize>, seed: u64) -> Result<Self> {
        check_gaussian(&truth, sigma, &n_per_task)?;
        if truth.len() < 2 {
            return Err(invalid("a scenario needs at least two tasks"));
        }
        Ok(Self {
            truth,
            sigma,
            n_per_task,
            seed,
        })
    }

    /// Four tasks in the plane at `μ·(±1, 0)` and `μ·(0, ±1)`, one sample each.
    pub fn four_point(mu: f64, sigma: f64, seed: u64) -> Result<Self> {
        let truth = vec![vec![mu, 0.0], vec![-mu, 0.0], vec![0.0, mu], vec![0.0, -mu]];
        Self::new(truth, sigma, vec![1; 4], seed)
    }

    pub fn n_tasks(&self) -> usize {
        self.truth.len()
    }

    pub fn dim(&self) -> usize {
        self.truth[0].len()
    }

    /// Task means for Monte Carlo trial `trial`.
    pub fn draw_stats(&self, trial: u64) -> SufficientStats {
        let mut g = rng::substream(self.seed, trial);
        let samples = draw_gaussian_samples(&mut g, &self.truth, self.sigma, &self.n_per_task);
        let task_means: Vec<Vec<f64>> = samples.iter().map(|s| linalg::mean(s)).collect();
        let grand_mean = linalg::mean(&task_means);
        SufficientStats {
            task_means,
            grand_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub task_means: Vec<Vec<f64>>,
    pub grand_mean: Vec<f64>,
}

impl SufficientStats {
    pub fn from_means(task_means: Vec<Vec<f64>>) -> Result<Self> {
        let grand_mean = consensus_estimate(&task_means)?;
        Ok(Self {
            task_means,
            grand_mean,
        })
    }

    pub fn from_datasets(datasets: &[TaskDataset]) -> Result<Self> {
        Self::from_means(separate_estimate(datasets)?)
    }

    pub fn n_tasks(&self) -> usize {
        self.task_means.len()
    }

    pub fn dim(&self) -> usize {
        self.grand_mean.len()
    }
}

/// Per-task sample means of the targets.
pub fn separate_estimate(datasets: &[TaskDataset]) -> Result<Vec<Vec<f64>>> {
    if datasets.is_empty() {
        return Err(invalid("no tasks given"));
    }
    datasets
        .iter()
        .map(|d| {
            if d.n_samples() == 0 {
                Err(invalid(format!("task {} has no samples", d.task_id)))
            } else {
                Ok(linalg::mean(d.targets()))
            }
        })
        .collect()
}

/// Unweighted average of the task means.
///
/// This is the exact minimizer of the pooled objective even when the `N_t`
/// differ, because each task's loss is itself averaged over its samples.
pub fn consensus_estimate(task_means: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = task_means.first() else {
        return Err(invalid("no task means given"));
    };
    if first.is_empty() || task_means.iter().any(|m| m.len() != first.len()) {
        return Err(invalid("task means must share a nonzero dimension"));
    }
    Ok(linalg::mean(task_means))
}

/// Value of the reduced centroid objective `g`.
pub fn reduced_objective(stats: &SufficientStats, centroid: &[f64], eps: f64) -> f64 {
    CentroidProblem {
        points: &stats.task_means,
        anchor: None,
        eps,
    }
    .value(centroid)
}

/// Exact cross-learning estimate for radius `eps`.
///
/// `tol` bounds the gradient norm of the reduced objective at the returned
/// centroid. Descent starts from the grand mean.
pub fn crosslearn_gaussian(stats: &SufficientStats, eps: f64, tol: f64) -> Result<ParamBundle> {
    crosslearn_gaussian_from(stats, eps, tol, &stats.grand_mean)
}

/// As [`crosslearn_gaussian`], starting the centroid descent at `init`.
pub fn crosslearn_gaussian_from(stats: &SufficientStats, eps: f64, tol: f64, init: &[f64]) -> Result<ParamBundle> {
    if !(eps >= 0.0) {
        return Err(invalid(format!("centrality radius must be >= 0, got {eps}")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let t = stats.n_tasks();
    if eps == 0.0 {
        return Ok(ParamBundle::uniform(t, &stats.grand_mean));
    }
    let spread = stats
        .task_means
        .iter()
        .map(|m| linalg::dist(m, &stats.grand_mean))
        .fold(0.0, f64::max);
    if spread <= eps {
        return Ok(ParamBundle {
            per_task: stats.task_means.clone(),
            centroid: stats.grand_mean.clone(),
        });
    }
    let problem = CentroidProblem {
        points: &stats.task_means,
        anchor: None,
        eps,
    };
    let (centroid, _) = minimize_centroid(&problem, init, tol)?;
    let per_task = stats
        .task_means
        .iter()
        .map(|m| linalg::project_ball(m, &centroid, eps))
        .collect();
    Ok(ParamBundle { per_task, centroid })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    /// Convex weights with `θ_g ≈ Σ γ_t θ̂_t`.
    pub gamma: Vec<f64>,
    /// `‖θ_t − P_B(θ_g, ε)(θ̂_t)‖` per task.
    pub projection_residuals: Vec<f64>,
    /// `‖θ_g − Σ γ_t θ̂_t‖`.
    pub combination_residual: f64,
}

impl KktCertificate {
    pub fn passes(&self) -> bool {
        let sum: f64 = self.gamma.iter().sum();
        self.gamma.iter().all(|&g| g >= -1e-6)
            && (sum - 1.0).abs() <= 1e-6
            && self.projection_residuals.iter().all(|&r| r <= 1e-8)
            && self.combination_residual <= 1e-6
    }
}

/// Certificate that `bundle` solves the Gaussian cross-learning problem.
///
/// At a stationary centroid with active constraints, `γ_t ∝ max(0, 1 − ε/d_t)`
/// with `d_t = ‖θ̂_t − θ_g‖`. When that weighting fits poorly (all
/// constraints inactive, or nearly so), γ is instead the least-squares fit
/// over the probability simplex.
pub fn kkt_certificate(stats: &SufficientStats, eps: f64, bundle: &ParamBundle) -> Result<KktCertificate> {
    let t = stats.n_tasks();
    if bundle.n_tasks() != t || bundle.dim() != stats.dim() {
        return Err(invalid("bundle does not match the sufficient statistics"));
    }
    let centroid = &bundle.centroid;
    let projection_residuals = stats
        .task_means
        .iter()
        .zip(&bundle.per_task)
        .map(|(m, theta)| linalg::dist(theta, &linalg::project_ball(m, centroid, eps)))
        .collect();

    let weights: Vec<f64> = stats
        .task_means
        .iter()
        .map(|m| {
            if eps == 0.0 {
                return 1.0;
            }
            let d = linalg::dist(m, centroid);
            if d > 0.0 {
                (1.0 - eps / d).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut gamma = if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / t as f64; t]
    };
    let mut residual = combination_residual(&stats.task_means, &gamma, centroid);
    if residual > 1e-9 * (1.0 + linalg::norm(centroid)) {
        let fitted = simplex_least_squares(&stats.task_means, centroid, &gamma);
        let r = combination_residual(&stats.task_means, &fitted, centroid);
        if r < residual {
            gamma = fitted;
            residual = r;
        }
    }
    Ok(KktCertificate {
        gamma,
        projection_residuals,
        combination_residual: residual,
    })
}

fn combine(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; points[0].len()];
    for (p, &w) in points.iter().zip(weights) {
        linalg::axpy(w, p, &mut out);
    }
    out
}

fn combination_residual(points: &[Vec<f64>], weights: &[f64], target: &[f64]) -> f64 {
    linalg::dist(&combine(points, weights), target)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if s - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - shift).max(0.0));
}

/// `argmin_γ ‖Σ γ_t p_t − target‖` over the simplex by accelerated
/// projected gradient. Since `Σ γ_t = 1` the points are shifted by `target`
/// first, which keeps the step size independent of where the cloud sits.
fn simplex_least_squares(points: &[Vec<f64>], target: &[f64], init: &[f64]) -> Vec<f64> {
    let shifted: Vec<Vec<f64>> = points.iter().map(|p| linalg::sub(p, target)).collect();
    let lipschitz: f64 = 2.0 * shifted.iter().map(|p| linalg::norm_sq(p)).sum::<f64>().max(1e-300);
    let zero = vec![0.0; target.len()];
    let mut gamma = init.to_vec();
    project_simplex(&mut gamma);
    let mut y = gamma.clone();
    let mut momentum = 1.0_f64;
    for _ in 0..200_000 {
        let r = combine(&shifted, &y);
        let mut next: Vec<f64> = y
            .iter()
            .zip(&shifted)
            .map(|(g, p)| g - 2.0 * linalg::dot(p, &r) / lipschitz)
            .collect();
        project_simplex(&mut next);
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / m_next;
        y = next.iter().zip(&gamma).map(|(n, g)| n + beta * (n - g)).collect();
        let moved = linalg::dist(&next, &gamma);
        gamma = next;
        momentum = m_next;
        if moved < 1e-16 || combination_residual(&shifted, &gamma, &zero) < 1e-13 {
            break;
        }
    }
    gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub e_sep: f64,
    pub e_cons: f64,
    pub e_cl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialErrors {
    pub e_sep: f64,
    pub e_cons: f64,
    /// One entry per grid radius.
    pub e_cl: Vec<f64>,
}

/// Per-trial errors of the three estimators over an ε grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MseSweep {
    pub eps_grid: Vec<f64>,
    pub trials: Vec<TrialErrors>,
}

impl MseSweep {
    pub fn mean_separate(&self) -> f64 {
        stats::mean(&self.trials.iter().map(|t| t.e_sep).collect::<Vec<_>>())
    }

    pub fn mean_consensus(&self) -> f64 {
        stats::mean(&self.trials.iter().map(|t| t.e_cons).collect::<Vec<_>>())
    }

    pub fn mean_crosslearn(&self, j: usize) -> f64 {
        stats::mean(&self.trials.iter().map(|t| t.e_cl[j]).collect::<Vec<_>>())
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        let e_sep = self.mean_separate();
        let e_cons = self.mean_consensus();
        self.eps_grid
            .iter()
            .enumerate()
            .map(|(j, &epsilon)| SweepRow {
                epsilon,
                e_sep,
                e_cons,
                e_cl: self.mean_crosslearn(j),
            })
            .collect()
    }

    /// Writes `epsilon,e_sep,e_cons,e_cl` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(invalid("empty epsilon grid"));
    }
    if let Some(bad) = eps_grid.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(invalid(format!("grid radius {bad} is not a finite nonnegative number")));
    }
    Ok(())
}

/// Monte Carlo mean squared errors of the separate, consensus and
/// cross-learning estimators.
pub fn mc_mse_sweep(scenario: &GaussianScenario, eps_grid: &[f64], trials: usize) -> Result<MseSweep> {
    check_grid(eps_grid)?;
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let results: Vec<TrialErrors> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let stats = scenario.draw_stats(trial);
            let e_sep = mean_squared_error(&stats.task_means, &scenario.truth)?;
            let cons = vec![stats.grand_mean.clone(); stats.n_tasks()];
            let e_cons = mean_squared_error(&cons, &scenario.truth)?;
            let e_cl = eps_grid
                .iter()
                .map(|&eps| {
                    let b = crosslearn_gaussian(&stats, eps, DEFAULT_TOL)?;
                    mean_squared_error(&b.per_task, &scenario.truth)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TrialErrors { e_sep, e_cons, e_cl })
        })
        .collect::<Result<_>>()?;
    Ok(MseSweep {
        eps_grid: eps_grid.to_vec(),
        trials: results,
    })
}

/// Monte Carlo moments of the separate and consensus estimators next to
/// their closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// Mean of `‖θ̂_t − θ_t★‖²` per task.
    pub separate_mse: Vec<f64>,
    /// `dσ²/N_t`.
    pub separate_expected: Vec<f64>,
    /// Mean of `‖θ̂_c − E θ̂_c‖²`.
    pub consensus_variance: f64,
    /// `(dσ²/T²) Σ_t 1/N_t`.
    pub consensus_expected: f64,
    /// Mean of `θ̂_c − θ_t★` per task.
    pub consensus_bias: Vec<Vec<f64>>,
    /// `(1/T) Σ_τ (θ_τ★ − θ_t★)` per task.
    pub bias_expected: Vec<Vec<f64>>,
}

impl MomentReport {
    /// Largest relative deviation of any variance from its closed form.
    pub fn worst_variance_error(&self) -> f64 {
        let sep = self
            .separate_mse
            .iter()
            .zip(&self.separate_expected)
            .map(|(m, e)| (m - e).abs() / e)
            .fold(0.0, f64::max);
        let cons = (self.consensus_variance - self.consensus_expected).abs() / self.consensus_expected;
        sep.max(cons)
    }

    /// Largest `‖bias − expected‖ / ‖expected‖` over tasks with nonzero bias.
    pub fn worst_bias_error(&self) -> f64 {
        self.consensus_bias
            .iter()
            .zip(&self.bias_expected)
            .filter(|(_, e)| linalg::norm(e) > 0.0)
            .map(|(b, e)| linalg::dist(b, e) / linalg::norm(e))
            .fold(0.0, f64::max)
    }
}

pub fn moment_check(scenario: &GaussianScenario, trials: usize) -> Result<MomentReport> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let t = scenario.n_tasks();
    let d = scenario.dim();
    let truth_mean = linalg::mean(&scenario.truth);
    let draws: Vec<SufficientStats> = (0..trials as u64).into_par_iter().map(|i| scenario.draw_stats(i)).collect();

    let n = trials as f64;
    let mut separate_mse = vec![0.0; t];
    let mut consensus_variance = 0.0;
    let mut mean_consensus = vec![0.0; d];
    for s in &draws {
        for (acc, (m, truth)) in separate_mse.iter_mut().zip(s.task_means.iter().zip(&scenario.truth)) {
            *acc += linalg::dist_sq(m, truth) / n;
        }
        consensus_variance += linalg::dist_sq(&s.grand_mean, &truth_mean) / n;
        linalg::axpy(1.0 / n, &s.grand_mean, &mut mean_consensus);
    }
    let sigma2 = scenario.sigma * scenario.sigma;
    let separate_expected = scenario.n_per_task.iter().map(|&nt| d as f64 * sigma2 / nt as f64).collect();
    let consensus_expected = d as f64 * sigma2 / (t * t) as f64 * scenario.n_per_task.iter().map(|&nt| 1.0 / nt as f64).sum::<f64>();
    let consensus_bias = scenario.truth.iter().map(|th| linalg::sub(&mean_consensus, th)).collect();
    let bias_expected = scenario.truth.iter().map(|th| linalg::sub(&truth_mean, th)).collect();
    Ok(MomentReport {
        separate_mse,
        separate_expected,
        consensus_variance,
        consensus_expected,
        consensus_bias,
        bias_expected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropositionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// The tested statistic; negative means the claimed improvement.
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    pub p2_trials: usize,
    pub p3_instances: usize,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            eps_grid: linspace(0.0, 6.0, 25),
            trials: 20_000,
            p2_trials: 1000,
            p3_instances: 100,
            bootstrap_resamples: 1000,
            confidence: 0.95,
        }
    }
}

pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct PropositionReport {
    pub sweep: MseSweep,
    pub checks: Vec<PropositionCheck>,
}

impl PropositionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PropositionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Writes `check,passed,value,detail` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["check", "passed", "value", "detail"])?;
        for c in &self.checks {
            w.write_record([c.name, if c.passed { "true" } else { "false" }, &c.value.to_string(), &c.detail])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the sweep and the four claims on it: a small radius beats consensus
/// (`P1`), a large data-dependent radius never loses to separate (`P2`),
/// constructed outlier datasets gain at least `ε²/T` (`P3`), and the best
/// grid radius beats both baselines (`T1`).
pub fn proposition_suite(scenario: &GaussianScenario, cfg: &SuiteConfig) -> Result<PropositionReport> {
    let sweep = mc_mse_sweep(scenario, &cfg.eps_grid, cfg.trials)?;
    let checks = vec![
        check_small_radius(&sweep, cfg.bootstrap_resamples, cfg.confidence, scenario.seed)?,
        check_large_radius(scenario, cfg.p2_trials)?,
        check_outlier_gain(cfg.p3_instances, scenario.dim(), scenario.seed)?,
        check_best_radius(&sweep, cfg.bootstrap_resamples, cfg.confidence, scenario.seed),
    ];
    Ok(PropositionReport { sweep, checks })
}

/// `P1`: mean `E_CL(ε₁) − E_C` is negative with bootstrap confidence at the
/// smallest nonzero grid radius `ε₁`.
pub fn check_small_radius(sweep: &MseSweep, resamples: usize, confidence: f64, seed: u64) -> Result<PropositionCheck> {
    let Some((j, &eps)) = sweep
        .eps_grid
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))
    else {
        return Err(invalid("the grid has no positive radius"));
    };
    let diffs: Vec<f64> = sweep.trials.iter().map(|t| t.e_cl[j] - t.e_cons).collect();
    let value = stats::mean(&diffs);
    let frac = stats::bootstrap_negative_fraction(diffs.len(), resamples, seed, |c| stats::weighted_mean(c, |i| diffs[i]));
    Ok(PropositionCheck {
        name: "P1",
        passed: value < 0.0 && frac >= confidence,
        value,
        detail: format!("eps={eps} mean(E_CL-E_C)={value:.6e} bootstrap={frac:.4}"),
    })
}

/// `T1`: `min_ε mean E_CL(ε) − min(mean E_S, mean E_C)` is negative with
/// bootstrap confidence.
pub fn check_best_radius(sweep: &MseSweep, resamples: usize, confidence: f64, seed: u64) -> PropositionCheck {
    let trials = &sweep.trials;
    let statistic = |counts: Option<&[u32]>| {
        let col = |f: &dyn Fn(usize) -> f64| match counts {
            Some(c) => stats::weighted_mean(c, f),
            None => (0..trials.len()).map(f).sum::<f64>() / trials.len() as f64,
        };
        let best = (0..sweep.eps_grid.len())
            .map(|j| col(&|i| trials[i].e_cl[j]))
            .fold(f64::INFINITY, f64::min);
        best - col(&|i| trials[i].e_sep).min(col(&|i| trials[i].e_cons))
    };
    let value = statistic(None);
    let frac = stats::bootstrap_negative_fraction(trials.len(), resamples, seed ^ 0x7431, |c| statistic(Some(c)));
    let rows = sweep.rows();
    let best = rows.iter().min_by(|a, b| a.e_cl.total_cmp(&b.e_cl)).expect("nonempty grid");
    PropositionCheck {
        name: "T1",
        passed: value < 0.0 && frac >= confidence,
        value,
        detail: format!(
            "best eps={} E_CL={:.6} E_S={:.6} E_C={:.6} bootstrap={frac:.4}",
            best.epsilon, best.e_cl, best.e_sep, best.e_cons
        ),
    }
}

/// `P2`: with `ε = max_t max_τ ‖θ_t★ − θ̂_τ‖` per trial, `E_CL ≤ E_S + 1e-9`.
pub fn check_large_radius(scenario: &GaussianScenario, trials: usize) -> Result<PropositionCheck> {
    let gaps: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let stats = scenario.draw_stats(trial);
            let eps = scenario
                .truth
                .iter()
                .flat_map(|th| stats.task_means.iter().map(move |m| linalg::dist(th, m)))
                .fold(0.0, f64::max);
            let b = crosslearn_gaussian(&stats, eps, DEFAULT_TOL)?;
            Ok(mean_squared_error(&b.per_task, &scenario.truth)? - mean_squared_error(&stats.task_means, &scenario.truth)?)
        })
        .collect::<Result<_>>()?;
    let passing = gaps.iter().filter(|g| **g <= 1e-9).count();
    let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PropositionCheck {
        name: "P2",
        passed: passing == trials,
        value: worst,
        detail: format!("{passing}/{trials} trials with E_CL <= E_S; worst E_CL-E_S={worst:.3e}"),
    })
}

/// A dataset built to sit in `C(ε)`: truths within `0.05ε` of a centre `c`,
/// `T − 1` task means clustered around `c − 0.9ε u` and one outlier at
/// `c + 4ε u`.
#[derive(Debug, Clone)]
pub struct OutlierInstance {
    pub stats: SufficientStats,
    pub truth: Vec<Vec<f64>>,
    pub eps: f64,
}

pub fn outlier_instance(g: &mut Rng, dim: usize) -> OutlierInstance {
    use rand::Rng as _;
    let t = g.random_range(5..=7usize);
    let eps = g.random_range(0.1..1.0);
    let centre = rng::normal_vec(g, dim);
    let u = rng::unit_vector(g, dim);
    let jitter = |g: &mut Rng, base: &[f64], radius: f64| {
        let dir = rng::unit_vector(g, dim);
        let r = radius * g.random::<f64>();
        base.iter().zip(&dir).map(|(b, d)| b + r * d).collect::<Vec<f64>>()
    };
    let truth: Vec<Vec<f64>> = (0..t).map(|_| jitter(g, &centre, 0.05 * eps)).collect();
    let cluster: Vec<f64> = centre.iter().zip(&u).map(|(c, ui)| c - 0.9 * eps * ui).collect();
    let mut means: Vec<Vec<f64>> = (0..t - 1).map(|_| jitter(g, &cluster, 0.02 * eps)).collect();
    means.push(centre.iter().zip(&u).map(|(c, ui)| c + 4.0 * eps * ui).collect());
    OutlierInstance {
        stats: SufficientStats::from_means(means).expect("consistent dimensions"),
        truth,
        eps,
    }
}

/// `P3`: on constructed instances that are verified members of `C(ε)` with
/// every truth inside `B(θ_g, ε)`, `E_CL ≤ E_S − ε²/T + 1e-9`.
pub fn check_outlier_gain(instances: usize, dim: usize, seed: u64) -> Result<PropositionCheck> {
    let outcomes: Vec<(bool, f64)> = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::substream(seed ^ 0x5033, i);
            let inst = outlier_instance(&mut g, dim);
            let b = crosslearn_gaussian(&inst.stats, inst.eps, DEFAULT_TOL)?;
            let member = inst
                .stats
                .task_means
                .iter()
                .any(|m| linalg::dist(m, &b.centroid) >= 3.0 * inst.eps);
            let covered = inst.truth.iter().all(|th| linalg::dist(th, &b.centroid) <= inst.eps);
            let e_cl = mean_squared_error(&b.per_task, &inst.truth)?;
            let e_s = mean_squared_error(&inst.stats.task_means, &inst.truth)?;
            let margin = e_cl - (e_s - inst.eps * inst.eps / inst.truth.len() as f64);
            Ok((member && covered && margin <= 1e-9, margin))
        })
        .collect::<Result<_>>()?;
    let passing = outcomes.iter().filter(|o| o.0).count();
    let worst = outcomes.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(PropositionCheck {
        name: "P3",
        passed: passing == instances,
        value: worst,
        detail: format!("{passing}/{instances} datasets with E_CL <= E_S - eps^2/T; worst margin={worst:.3e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(means: &[&[f64]]) -> SufficientStats {
        SufficientStats::from_means(means.iter().map(|m| m.to_vec()).collect()).unwrap()
    }

    #[test]
    fn separate_and_consensus() {
        let d = TaskDataset::from_targets(0, vec![vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(separate_estimate(&[d]).unwrap(), vec![vec![1.0, 1.0]]);
        let c = consensus_estimate(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        assert_eq!(c, vec![0.0, 0.0]);
        assert!(consensus_estimate(&[]).is_err());
    }

    #[test]
    fn symmetric_pair() {
        let s = stats(&[&[-1.0, 0.0], &[1.0, 0.0]]);
        let b = crosslearn_gaussian(&s, 0.5, 1e-12).unwrap();
        assert!(linalg::norm(&b.centroid) < 1e-12);
        assert!(linalg::dist(&b.per_task[0], &[-0.5, 0.0]) < 1e-12);
        assert!(linalg::dist(&b.per_task[1], &[0.5, 0.0]) < 1e-12);
    }

    #[test]
    fn limits() {
        let s = stats(&[&[0.0], &[1.0], &[5.0]]);
        assert_eq!(crosslearn_gaussian(&s, 0.0, 1e-10).unwrap(), ParamBundle::uniform(3, &[2.0]));
        let wide = crosslearn_gaussian(&s, 3.0, 1e-10).unwrap();
        assert_eq!(wide.per_task, s.task_means);
    }

    #[test]
    fn certificate_on_limits() {
        let s = stats(&[&[0.0, 1.0], &[1.0, 0.0], &[3.0, 3.0]]);
        let b = crosslearn_gaussian(&s, 0.0, 1e-10).unwrap();
        let c = kkt_certificate(&s, 0.0, &b).unwrap();
        assert!(c.passes());
        assert!(c.gamma.iter().all(|g| (g - 1.0 / 3.0).abs() < 1e-15));
        let b = crosslearn_gaussian(&s, 10.0, 1e-10).unwrap();
        let c = kkt_certificate(&s, 10.0, &b).unwrap();
        assert!(c.passes());
        assert!(c.projection_residuals.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.5, 0.5, 0.5];
        project_simplex(&mut v);
        assert!(v.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let mut v = vec![3.0, 0.0, -1.0];
        project_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn sweep_zero_radius_is_consensus() {
        let sc = GaussianScenario::four_point(2.0, 1.0, 3).unwrap();
        let sweep = mc_mse_sweep(&sc, &[0.0, 1.0], 50).unwrap();
        assert!(sweep.trials.iter().all(|t| t.e_cl[0] == t.e_cons));
    }

    #[test]
    fn csv_layout() {
        let sweep = MseSweep {
            eps_grid: vec![0.0, 0.5],
            trials: vec![TrialErrors {
                e_sep: 2.0,
                e_cons: 4.5,
                e_cl: vec![4.5, 1.25],
            }],
        };
        let mut buf = Vec::new();
        sweep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epsilon,e_sep,e_cons,e_cl\n0.0,2.0,4.5,4.5\n0.5,2.0,4.5,1.25\n");
    }
}
