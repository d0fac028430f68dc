//! `solver-check`: certificates and cross-checks of the solvers on random
//! instances.

use crosslearn::gaussian::{self, SufficientStats, DEFAULT_TOL};
use crosslearn::linalg;
use crosslearn::models::{ConstantModel, LinearModel};
use crosslearn::rng::{self, Rng};
use crosslearn::solvers::{self, AdmmConfig, PrimalDualConfig};
use crosslearn::{functional_gap, ParamBundle, TaskDataset};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bail_config, Table};
use crate::config::RunConfig;
use crate::run::{Check, Failure, Outcome};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CheckParams {
    kkt_instances: usize,
    admm_instances: usize,
    primal_dual_instances: usize,
    projection_instances: usize,
    gap_points: usize,
    admm: AdmmConfig,
    admm_tol: f64,
    primal_dual: PrimalDualConfig,
    primal_dual_tol: f64,
    projection_tol: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            kkt_instances: 200,
            admm_instances: 50,
            primal_dual_instances: 50,
            projection_instances: 100,
            gap_points: 1000,
            admm: AdmmConfig {
                residual_tol: 1e-9,
                outer_iters: 20_000,
                prox_inner_tol: 1e-12,
                ..AdmmConfig::default()
            },
            admm_tol: 1e-4,
            primal_dual: PrimalDualConfig {
                eta_p: 0.005,
                eta_d: 0.1,
                epochs: 20_000,
                ..PrimalDualConfig::default()
            },
            primal_dual_tol: 1e-3,
            projection_tol: 1e-6,
        }
    }
}

/// One instance of one check.
struct Case {
    value: f64,
    passed: bool,
}

fn random_means(g: &mut Rng, t: usize, d: usize) -> Vec<Vec<f64>> {
    (0..t).map(|_| rng::normal_vec(g, d)).collect()
}

/// A radius between zero and the largest distance to the grand mean, so
/// that some constraints are usually active.
fn active_radius(g: &mut Rng, means: &[Vec<f64>]) -> f64 {
    let c = linalg::mean(means);
    let spread = means.iter().map(|m| linalg::dist(m, &c)).fold(0.0, f64::max);
    spread * g.random_range(0.05..1.0)
}

fn gaussian_tasks(g: &mut Rng, t: usize, d: usize) -> Vec<TaskDataset> {
    (0..t)
        .map(|i| {
            let centre = rng::normal_vec(g, d);
            let n = g.random_range(1..=5usize);
            let ys = (0..n).map(|_| linalg::add(&centre, &rng::normal_vec(g, d))).collect();
            TaskDataset::from_targets(i, ys).expect("consistent samples")
        })
        .collect()
}

fn kkt_case(seed: u64, i: u64) -> crosslearn::Result<Case> {
    let mut g = rng::substream(seed ^ 0x6b6b74, i);
    let t = g.random_range(2..=6usize);
    let d = g.random_range(1..=5usize);
    let means = random_means(&mut g, t, d);
    let eps = active_radius(&mut g, &means);
    let stats = SufficientStats::from_means(means)?;
    let b = gaussian::crosslearn_gaussian(&stats, eps, DEFAULT_TOL)?;
    let cert = gaussian::kkt_certificate(&stats, eps, &b)?;
    let min_gamma = cert.gamma.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Case {
        value: min_gamma,
        passed: cert.passes(),
    })
}

fn admm_case(seed: u64, i: u64, p: &CheckParams) -> crosslearn::Result<Case> {
    let mut g = rng::substream(seed ^ 0x61646d6d, i);
    let t = g.random_range(2..=5usize);
    let d = g.random_range(1..=3usize);
    let tasks = gaussian_tasks(&mut g, t, d);
    let stats = SufficientStats::from_datasets(&tasks)?;
    let eps = active_radius(&mut g, &stats.task_means);
    let exact = gaussian::crosslearn_gaussian(&stats, eps, DEFAULT_TOL)?;
    let rep = solvers::admm_solve(&tasks, &ConstantModel::new(d), eps, &p.admm, &ParamBundle::zeros(t, d))?;
    let err = max_task_diff(&rep.final_bundle, &exact);
    Ok(Case {
        value: err,
        passed: rep.converged && err <= p.admm_tol,
    })
}

fn primal_dual_case(seed: u64, i: u64, p: &CheckParams) -> crosslearn::Result<Case> {
    let mut g = rng::substream(seed ^ 0x7064, i);
    let t = g.random_range(2..=5usize);
    let tasks = gaussian_tasks(&mut g, t, 1);
    let stats = SufficientStats::from_datasets(&tasks)?;
    let eps = active_radius(&mut g, &stats.task_means);
    let exact = gaussian::crosslearn_gaussian(&stats, eps, DEFAULT_TOL)?;
    let rep = solvers::primal_dual_solve(&tasks, &ConstantModel::new(1), eps, &p.primal_dual, &ParamBundle::zeros(t, 1))?;
    let err = max_task_diff(&rep.final_bundle, &exact);
    Ok(Case {
        value: err,
        passed: err <= p.primal_dual_tol,
    })
}

/// Per-task parameters only: the centroid is not unique when constraints
/// are inactive.
fn max_task_diff(a: &ParamBundle, b: &ParamBundle) -> f64 {
    a.per_task
        .iter()
        .zip(&b.per_task)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Projection onto the coupled balls by Dykstra's alternating projections
/// onto the single-constraint sets `{‖z_t − z_g‖ ≤ ε}`, each of which has
/// a closed form.
fn dykstra_projection(v: &ParamBundle, eps: f64) -> ParamBundle {
    let t = v.n_tasks();
    let mut x = v.clone();
    // one correction per constraint, over the (z_t, z_g) pair it touches
    let mut corr: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0; v.dim()], vec![0.0; v.dim()]); t];
    for _ in 0..1_000_000 {
        let before = x.clone();
        for (k, (ct, cg)) in corr.iter_mut().enumerate() {
            let a = linalg::add(&x.per_task[k], ct);
            let b = linalg::add(&x.centroid, cg);
            let (pa, pb) = project_pair(&a, &b, eps);
            *ct = linalg::sub(&a, &pa);
            *cg = linalg::sub(&b, &pb);
            x.per_task[k] = pa;
            x.centroid = pb;
        }
        if x.distance(&before) < 1e-15 {
            break;
        }
    }
    x
}

/// Nearest `(a', b')` to `(a, b)` with `‖a' − b'‖ ≤ ε`.
fn project_pair(a: &[f64], b: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
    let d = linalg::dist(a, b);
    if d <= eps {
        return (a.to_vec(), b.to_vec());
    }
    let shrink = (d - eps) / (2.0 * d);
    let diff = linalg::sub(a, b);
    let mut pa = a.to_vec();
    let mut pb = b.to_vec();
    linalg::axpy(-shrink, &diff, &mut pa);
    linalg::axpy(shrink, &diff, &mut pb);
    (pa, pb)
}

fn projection_case(seed: u64, i: u64, p: &CheckParams) -> crosslearn::Result<Case> {
    let mut g = rng::substream(seed ^ 0x70726f6a, i);
    let t = g.random_range(2..=6usize);
    let d = g.random_range(1..=4usize);
    let per_task = random_means(&mut g, t, d);
    let v = ParamBundle::new(per_task.clone(), rng::normal_vec(&mut g, d))?;
    let eps = active_radius(&mut g, &per_task);
    let proj = solvers::project_coupled_ball(&v, eps, 1e-12)?;
    let oracle = dykstra_projection(&v, eps);
    let err = proj.max_abs_diff(&oracle);
    let again = solvers::project_coupled_ball(&proj, eps, 1e-12)?;
    let idempotent = again.max_abs_diff(&proj) <= 1e-10;
    let w = ParamBundle::new(
        v.per_task.iter().map(|x| linalg::add(x, &rng::normal_vec(&mut g, d))).collect(),
        linalg::add(&v.centroid, &rng::normal_vec(&mut g, d)),
    )?;
    let pw = solvers::project_coupled_ball(&w, eps, 1e-12)?;
    let nonexpansive = pw.distance(&proj) <= w.distance(&v) + 1e-9;
    Ok(Case {
        value: err,
        passed: err <= p.projection_tol && idempotent && nonexpansive,
    })
}

fn gap_case(seed: u64, i: u64) -> crosslearn::Result<Case> {
    let mut g = rng::substream(seed ^ 0x676170, i);
    let inputs = g.random_range(1..=4usize);
    let outputs = g.random_range(1..=3usize);
    let n = g.random_range(1..=20usize);
    let model = LinearModel::new(inputs, outputs);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| rng::normal_vec(&mut g, inputs)).collect();
    let ys: Vec<Vec<f64>> = (0..n).map(|_| rng::normal_vec(&mut g, outputs)).collect();
    let data = TaskDataset::new(0, xs, ys)?;
    let eps = g.random_range(0.01..2.0);
    let s = inputs * outputs;
    let theta_g = rng::normal_vec(&mut g, s);
    let r = eps * g.random::<f64>();
    let mut theta_t = theta_g.clone();
    linalg::axpy(r, &rng::unit_vector(&mut g, s), &mut theta_t);
    let lip = model.lipschitz_bound(&data);
    let gap = functional_gap(&data, &theta_t, &theta_g, &model);
    Ok(Case {
        value: gap - lip * eps,
        passed: gap <= lip * eps + 1e-9,
    })
}

fn collect(n: usize, f: impl Fn(u64) -> crosslearn::Result<Case> + Sync + Send) -> crosslearn::Result<Vec<Case>> {
    (0..n as u64).into_par_iter().map(f).collect()
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p: CheckParams = cfg.params()?;
    p.admm.validate()?;
    if p.primal_dual.epochs == 0 || !(p.primal_dual.eta_p > 0.0 && p.primal_dual.eta_d > 0.0) {
        return Err(bail_config("primal_dual needs epochs >= 1 and positive step sizes"));
    }
    let counts = [p.kkt_instances, p.admm_instances, p.primal_dual_instances, p.projection_instances, p.gap_points];
    if counts.contains(&0) {
        return Err(bail_config("instance counts must be positive"));
    }
    if !(p.admm_tol > 0.0 && p.primal_dual_tol > 0.0 && p.projection_tol > 0.0) {
        return Err(bail_config("tolerances must be positive"));
    }
    let seed = cfg.seed;
    let groups: Vec<(&str, String, Vec<Case>)> = vec![
        ("kkt certificate", "min gamma".into(), collect(p.kkt_instances, |i| kkt_case(seed, i))?),
        (
            "admm vs closed form",
            format!("max coordinate error (tol {})", p.admm_tol),
            collect(p.admm_instances, |i| admm_case(seed, i, &p))?,
        ),
        (
            "primal-dual vs closed form",
            format!("max coordinate error (tol {})", p.primal_dual_tol),
            collect(p.primal_dual_instances, |i| primal_dual_case(seed, i, &p))?,
        ),
        (
            "projection vs oracle",
            format!("max coordinate error (tol {})", p.projection_tol),
            collect(p.projection_instances, |i| projection_case(seed, i, &p))?,
        ),
        ("functional gap bound", "gap - L*eps".into(), collect(p.gap_points, |i| gap_case(seed, i))?),
    ];

    let mut out = Outcome::new(&p)?;
    let mut csv = Table::new(["check", "instance", "value", "passed"])?;
    for (name, what, cases) in &groups {
        for (i, c) in cases.iter().enumerate() {
            csv.row([name.to_string(), i.to_string(), c.value.to_string(), c.passed.to_string()])?;
        }
        let passing = cases.iter().filter(|c| c.passed).count();
        let worst = cases.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
        let best = cases.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
        out.check(Check::gate(
            *name,
            passing == cases.len(),
            format!("{passing}/{} pass; {what} ranges over [{best:.3e}, {worst:.3e}]", cases.len()),
        ));
    }
    out.add("solver_check.csv", csv.into_bytes()?);
    Ok(out)
}
