//! Fitting `(β, γ)` to observed waves: separately, jointly, or with
//! cross-learning through ADMM.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_prediction, infected_fraction, infected_fractions, EpidemicWave, SirParams, WaveMetrics, DEFAULT_DT};
use crate::error::{invalid, Result};
use crate::numdiff::central_gradient;
use crate::problem::{empirical_objective, LossModel, ParamBundle, TaskDataset};
use crate::solvers::descent::{self, DescentOptions};
use crate::solvers::{admm_solve_warm, project_coupled_ball, AdmmConfig, SolveReport};

/// SIR trajectories as a [`LossModel`] over `θ = (β, γ)`.
///
/// Samples encode `x = (day, I₀/N)` and `y = I(day)/N`. The loss is
/// `scale · (y − ŷ)²`; a common positive `scale` leaves every fit's
/// minimizer unchanged and only brings the objective to order one for the
/// solver tolerances. Gradients are central finite differences.
#[derive(Debug, Clone, Copy)]
pub struct SirModel {
    pub dt: f64,
    pub scale: f64,
    pub fd_step: f64,
}

impl SirModel {
    pub fn new(scale: f64) -> Self {
        Self {
            dt: DEFAULT_DT,
            scale,
            fd_step: 1e-6,
        }
    }

    /// Scale set to the reciprocal mean square of all targets.
    pub fn for_tasks(tasks: &[TaskDataset]) -> Self {
        let (sum, count) = tasks
            .iter()
            .flat_map(|d| d.targets().iter())
            .fold((0.0, 0usize), |(s, c), y| (s + y[0] * y[0], c + 1));
        let ms = sum / count.max(1) as f64;
        Self::new(if ms > 0.0 { 1.0 / ms } else { 1.0 })
    }

    fn simulate(&self, theta: &[f64], i0: f64, days: usize) -> Option<Vec<f64>> {
        // negative rates are read as zero, so the loss stays finite for the
        // unconstrained copies ADMM and finite differences pass in
        let p = SirParams {
            beta: theta[0].max(0.0),
            gamma: theta[1].max(0.0),
        };
        infected_fraction(p, i0, days, self.dt).ok()
    }

    fn loss_of(&self, data: &TaskDataset, indices: &[usize], traj: &[f64]) -> f64 {
        let total: f64 = indices
            .iter()
            .map(|&k| (data.target(k)[0] - traj[data.input(k)[0] as usize]).powi(2))
            .sum();
        self.scale * total / indices.len() as f64
    }
}

fn span(data: &TaskDataset, indices: &[usize]) -> (f64, usize) {
    let i0 = data.input(indices[0])[1];
    let last = indices.iter().map(|&k| data.input(k)[0] as usize).max().unwrap_or(0);
    (i0, last)
}

impl LossModel for SirModel {
    fn param_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn predict(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        let day = x[0] as usize;
        match self.simulate(theta, x[1], day) {
            Some(traj) => vec![traj[day]],
            None => vec![f64::NAN],
        }
    }

    fn loss(&self, y: &[f64], y_hat: &[f64]) -> f64 {
        self.scale * (y[0] - y_hat[0]).powi(2)
    }

    fn empirical_loss_on(&self, data: &TaskDataset, indices: &[usize], theta: &[f64]) -> f64 {
        let (i0, last) = span(data, indices);
        match self.simulate(theta, i0, last) {
            Some(traj) => self.loss_of(data, indices, &traj),
            None => f64::INFINITY,
        }
    }

    fn grad_on(&self, data: &TaskDataset, indices: &[usize], theta: &[f64]) -> Vec<f64> {
        // the four central-difference probes share one lockstep integration
        let (i0, last) = span(data, indices);
        let hb = self.fd_step * (1.0 + theta[0].abs());
        let hg = self.fd_step * (1.0 + theta[1].abs());
        let (b, g) = (theta[0], theta[1]);
        let rates = [(b + hb, g), (b - hb, g), (b, g + hg), (b, g - hg)].map(|(x, y)| (x.max(0.0), y.max(0.0)));
        match infected_fractions(rates, i0, last, self.dt) {
            Some(t) => vec![
                (self.loss_of(data, indices, &t[0]) - self.loss_of(data, indices, &t[1])) / (2.0 * hb),
                (self.loss_of(data, indices, &t[2]) - self.loss_of(data, indices, &t[3])) / (2.0 * hg),
            ],
            None => central_gradient(|th| self.empirical_loss_on(data, indices, th), theta, self.fd_step),
        }
    }

    fn predict_vjp(&self, x: &[f64], theta: &[f64], w: &[f64]) -> Vec<f64> {
        central_gradient(|th| w[0] * self.predict(x, th)[0], theta, self.fd_step)
    }

    fn project_params(&self, theta: &mut [f64]) {
        theta.iter_mut().for_each(|v| *v = v.max(0.0));
    }
}

/// Task dataset holding the first `window` days of `wave`, normalized by
/// its population.
pub fn wave_task(wave: &EpidemicWave, window: usize, task_id: usize) -> Result<TaskDataset> {
    if window == 0 || window > wave.len() {
        return Err(invalid(format!("{}: window {window} outside 1..={}", wave.country, wave.len())));
    }
    let obs = wave.normalized();
    let inputs = (0..window).map(|d| vec![d as f64, obs[0]]).collect();
    let targets = obs[..window].iter().map(|v| vec![*v]).collect();
    TaskDataset::new(task_id, inputs, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitMode {
    Separate,
    Consensus,
    CrossLearn(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SirFitConfig {
    pub admm: AdmmConfig,
    pub initial: SirParams,
    pub fit_iters: usize,
    pub fit_tol: f64,
    /// When positive, cross-learning runs ADMM with
    /// `λ0 = min(admm.lambda0, lambda_per_radius·ε)`. A penalty much weaker
    /// than the radius lets the first prox steps leave the ball by far more
    /// than `ε` and the iterates fall onto the flat no-outbreak region.
    pub lambda_per_radius: f64,
}

impl Default for SirFitConfig {
    fn default() -> Self {
        Self {
            admm: AdmmConfig {
                lambda0: 0.3,
                gamma: 1.0,
                outer_iters: 500,
                prox_inner_iters: 20,
                prox_inner_tol: 1e-7,
                residual_tol: 1e-3,
                ..AdmmConfig::default()
            },
            initial: SirParams { beta: 0.3, gamma: 0.1 },
            fit_iters: 2000,
            fit_tol: 1e-8,
            lambda_per_radius: 0.25,
        }
    }
}

impl SirFitConfig {
    /// ADMM settings used at radius `eps`.
    pub fn admm_for(&self, eps: f64) -> AdmmConfig {
        let mut admm = self.admm.clone();
        if self.lambda_per_radius > 0.0 {
            admm.lambda0 = admm.lambda0.min(self.lambda_per_radius * eps);
        }
        admm
    }

    pub fn validate(&self) -> Result<()> {
        self.admm.validate()?;
        SirParams::new(self.initial.beta, self.initial.gamma)?;
        if self.fit_iters == 0 || !(self.fit_tol > 0.0) {
            return Err(invalid("fit_iters and fit_tol must be positive"));
        }
        if !(self.lambda_per_radius >= 0.0 && self.lambda_per_radius.is_finite()) {
            return Err(invalid("lambda_per_radius must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mode: FitMode,
    pub per_country: Vec<SirParams>,
    pub centroid: SirParams,
    /// Mean scaled training loss over countries.
    pub objective: f64,
    /// Countries whose fit did not meet the tolerance (all of them when a
    /// joint fit fails).
    pub unconverged: Vec<String>,
    pub report: Option<SolveReport>,
}

impl FitResult {
    pub fn bundle(&self) -> ParamBundle {
        ParamBundle {
            per_task: self.per_country.iter().map(|p| p.to_vec()).collect(),
            centroid: self.centroid.to_vec(),
        }
    }
}

fn minimize_sum(model: &SirModel, tasks: &[&TaskDataset], cfg: &SirFitConfig) -> (Vec<f64>, bool) {
    let f = |th: &[f64]| tasks.iter().map(|d| model.empirical_loss(d, th)).sum::<f64>() / tasks.len() as f64;
    let g = |th: &[f64]| {
        let mut acc = vec![0.0; 2];
        for d in tasks {
            for (a, v) in acc.iter_mut().zip(model.grad(d, th)) {
                *a += v / tasks.len() as f64;
            }
        }
        acc
    };
    let opts = DescentOptions {
        max_iters: cfg.fit_iters,
        grad_tol: cfg.fit_tol,
        initial_step: Some(1e-3),
        ..DescentOptions::default()
    };
    let out = descent::minimize(f, g, |th: &mut [f64]| model.project_params(th), &cfg.initial.to_vec(), &opts);
    (out.x, out.converged)
}

/// `b` with its centroid moved so every task lies within `eps`, when the
/// task parameters themselves need not move.
fn enclosing(b: &ParamBundle, eps: f64, tol: f64) -> Result<Option<ParamBundle>> {
    let p = project_coupled_ball(b, eps, tol)?;
    let moved = b.per_task.iter().zip(&p.per_task).map(|(x, y)| crate::linalg::dist_sq(x, y)).sum::<f64>().sqrt();
    if moved > 1e-9 * (1.0 + b.norm()) {
        return Ok(None);
    }
    Ok(Some(ParamBundle {
        per_task: b.per_task.clone(),
        centroid: p.centroid,
    }))
}

/// Fits every wave on its own `fit_windows[t]` leading days.
pub fn fit_waves(waves: &[EpidemicWave], mode: FitMode, cfg: &SirFitConfig, fit_windows: &[usize]) -> Result<FitResult> {
    fit_waves_from(waves, mode, cfg, fit_windows, None)
}

/// As [`fit_waves`]; cross-learning starts ADMM (prox problems and `z`)
/// from `init` instead of the consensus fit, and skips the check for
/// separate fits that already satisfy the radius.
pub fn fit_waves_from(
    waves: &[EpidemicWave],
    mode: FitMode,
    cfg: &SirFitConfig,
    fit_windows: &[usize],
    init: Option<&ParamBundle>,
) -> Result<FitResult> {
    cfg.validate()?;
    if waves.is_empty() {
        return Err(invalid("no waves given"));
    }
    if fit_windows.len() != waves.len() {
        return Err(invalid(format!("{} fit windows for {} waves", fit_windows.len(), waves.len())));
    }
    let tasks = waves
        .iter()
        .zip(fit_windows)
        .enumerate()
        .map(|(t, (w, &n))| wave_task(w, n, t))
        .collect::<Result<Vec<_>>>()?;
    let model = SirModel::for_tasks(&tasks);
    let names = || waves.iter().map(|w| w.country.clone()).collect::<Vec<_>>();

    let refs: Vec<&TaskDataset> = tasks.iter().collect();
    let separate = || {
        let fits: Vec<(Vec<f64>, bool)> = tasks.par_iter().map(|d| minimize_sum(&model, &[d], cfg)).collect();
        let unconverged: Vec<String> = waves
            .iter()
            .zip(&fits)
            .filter(|(_, f)| !f.1)
            .map(|(w, _)| w.country.clone())
            .collect();
        let per_task: Vec<Vec<f64>> = fits.into_iter().map(|f| f.0).collect();
        let centroid = crate::linalg::mean(&per_task);
        (ParamBundle { per_task, centroid }, unconverged)
    };
    let consensus = || {
        let (theta, ok) = minimize_sum(&model, &refs, cfg);
        (ParamBundle::uniform(tasks.len(), &theta), if ok { vec![] } else { names() })
    };

    let (bundle, unconverged, report) = match mode {
        FitMode::Separate => {
            let (b, u) = separate();
            (b, u, None)
        }
        FitMode::Consensus => {
            let (b, u) = consensus();
            (b, u, None)
        }
        // a zero radius is the consensus problem
        FitMode::CrossLearn(eps) if eps == 0.0 => {
            let (b, u) = consensus();
            (b, u, None)
        }
        FitMode::CrossLearn(eps) => {
            let start = match init {
                Some(b) => Some(b.clone()),
                None => {
                    let (sep, _) = separate();
                    match enclosing(&sep, eps, cfg.admm.projection_tol)? {
                        // separate fits that already fit in a ball are
                        // stationary for the coupled problem
                        Some(b) => return finish(mode, &tasks, &model, b, vec![], None),
                        None => None,
                    }
                }
            };
            // consensus is feasible for every radius
            let start = match start {
                Some(b) => b,
                None => consensus().0,
            };
            let rep = admm_solve_warm(&tasks, &model, eps, &cfg.admm_for(eps), &start)?;
            let unconverged = if rep.converged { vec![] } else { names() };
            (rep.final_bundle.clone(), unconverged, Some(rep))
        }
    };
    finish(mode, &tasks, &model, bundle, unconverged, report)
}

fn finish(
    mode: FitMode,
    tasks: &[TaskDataset],
    model: &SirModel,
    bundle: ParamBundle,
    unconverged: Vec<String>,
    report: Option<SolveReport>,
) -> Result<FitResult> {
    let objective = empirical_objective(tasks, &bundle, model)?;
    Ok(FitResult {
        mode,
        per_country: bundle.per_task.iter().map(|th| SirParams::from_slice(th)).collect(),
        centroid: SirParams::from_slice(&bundle.centroid),
        objective,
        unconverged,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub epsilon: f64,
    pub metrics: WaveMetrics,
    pub params: SirParams,
    pub fit: FitResult,
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub target: usize,
    pub rows: Vec<AblationRow>,
    pub separate: WaveMetrics,
    pub consensus: WaveMetrics,
    pub separate_fit: FitResult,
    pub consensus_fit: FitResult,
}

impl Ablation {
    /// Grid row with the smallest absolute peak error (first on ties).
    pub fn best_row(&self) -> &AblationRow {
        self.rows
            .iter()
            .min_by(|a, b| a.metrics.peak_error_pct.abs().total_cmp(&b.metrics.peak_error_pct.abs()))
            .expect("validated nonempty grid")
    }

    /// Writes `epsilon,peak_error_pct,lag_error_days` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "peak_error_pct", "lag_error_days"])?;
        for r in &self.rows {
            w.write_record([r.epsilon.to_string(), r.metrics.peak_error_pct.to_string(), r.metrics.lag_error_days.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Forecasts wave `target` from its first `fit_window` days, with every
/// other wave fully observed, for each radius of `eps_grid` and for the two
/// baselines.
pub fn epsilon_ablation(
    waves: &[EpidemicWave],
    target: usize,
    eps_grid: &[f64],
    fit_window: usize,
    cfg: &SirFitConfig,
) -> Result<Ablation> {
    if target >= waves.len() {
        return Err(invalid(format!("target index {target} out of range")));
    }
    if !eps_grid.contains(&0.0) || !eps_grid.iter().any(|e| *e >= 1.0) {
        return Err(invalid("the ablation grid must contain 0 and a radius >= 1"));
    }
    if eps_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(invalid("grid radii must be finite and nonnegative"));
    }
    let windows: Vec<usize> = waves
        .iter()
        .enumerate()
        .map(|(t, w)| if t == target { fit_window } else { w.len() })
        .collect();
    let wave = &waves[target];
    let separate_fit = fit_waves(waves, FitMode::Separate, cfg, &windows)?;
    let consensus_fit = fit_waves(waves, FitMode::Consensus, cfg, &windows)?;
    let tasks = waves
        .iter()
        .zip(&windows)
        .enumerate()
        .map(|(t, (w, &n))| wave_task(w, n, t))
        .collect::<Result<Vec<_>>>()?;
    let model = SirModel::for_tasks(&tasks);
    let sep = separate_fit.bundle();
    let cons = consensus_fit.bundle();
    let rows = eps_grid
        .par_iter()
        .map(|&eps| {
            let mode = FitMode::CrossLearn(eps);
            let fit = if eps == 0.0 {
                FitResult { mode, ..consensus_fit.clone() }
            } else if let Some(b) = enclosing(&sep, eps, cfg.admm.projection_tol)? {
                finish(mode, &tasks, &model, b, vec![], None)?
            } else {
                fit_waves_from(waves, mode, cfg, &windows, Some(&cons))?
            };
            let params = fit.per_country[target];
            Ok(AblationRow {
                epsilon: eps,
                metrics: evaluate_prediction(wave, params, fit_window)?,
                params,
                fit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ablation {
        target,
        rows,
        separate: evaluate_prediction(wave, separate_fit.per_country[target], fit_window)?,
        consensus: evaluate_prediction(wave, consensus_fit.per_country[target], fit_window)?,
        separate_fit,
        consensus_fit,
    })
}
