//! Seeded synthetic data: Gaussian task samples, SIR waves, domain blobs.

use chrono::NaiveDate;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg;
use crate::problem::TaskDataset;
use crate::rng::{self, Rng};
use crate::sir::{sir_simulate, EpidemicWave, SirParams, DEFAULT_DT};

fn validate_gaussian(truth: &[Vec<f64>], sigma: f64, n_per_task: &[usize]) -> Result<()> {
    if truth.is_empty() {
        return Err(invalid("at least one task is required"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive and finite, got {sigma}")));
    }
    if n_per_task.len() != truth.len() {
        return Err(invalid(format!(
            "{} sample counts for {} tasks",
            n_per_task.len(),
            truth.len()
        )));
    }
    if n_per_task.contains(&0) {
        return Err(invalid("every task needs at least one sample"));
    }
    let d = truth[0].len();
    if d == 0 || truth.iter().any(|t| t.len() != d) {
        return Err(invalid("truth vectors must share a nonzero dimension"));
    }
    Ok(())
}

/// Draws `y_tn = θ_t★ + σ η_tn` with standard normal `η` from `rng`,
/// task by task and sample by sample.
pub fn draw_gaussian_samples(rng: &mut Rng, truth: &[Vec<f64>], sigma: f64, n_per_task: &[usize]) -> Vec<Vec<Vec<f64>>> {
    truth
        .iter()
        .zip(n_per_task)
        .map(|(theta, &n)| {
            (0..n)
                .map(|_| theta.iter().map(|m| m + sigma * rng::standard_normal(rng)).collect())
                .collect()
        })
        .collect()
}

/// Per-task Gaussian sample sets for the constant-regressor model.
pub fn gen_gaussian_scenario(truth: &[Vec<f64>], sigma: f64, n_per_task: &[usize], seed: u64) -> Result<Vec<TaskDataset>> {
    validate_gaussian(truth, sigma, n_per_task)?;
    let mut g = rng::seeded(seed);
    draw_gaussian_samples(&mut g, truth, sigma, n_per_task)
        .into_iter()
        .enumerate()
        .map(|(t, samples)| TaskDataset::from_targets(t, samples))
        .collect()
}

pub(crate) fn check_gaussian(truth: &[Vec<f64>], sigma: f64, n_per_task: &[usize]) -> Result<()> {
    validate_gaussian(truth, sigma, n_per_task)
}

/// Settings of [`gen_synthetic_waves`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticWaveConfig {
    pub center: SirParams,
    /// Half-width of the box around `center` that rates are drawn from.
    pub spread: f64,
    pub t_count: usize,
    /// Standard deviation of the multiplicative observation noise, percent.
    pub noise_pct: f64,
    pub seed: u64,
    pub population: f64,
    /// Infected fraction on day 0.
    pub initial_fraction: f64,
    pub horizon_days: usize,
}

impl Default for SyntheticWaveConfig {
    fn default() -> Self {
        Self {
            center: SirParams { beta: 0.5, gamma: 0.35 },
            spread: 0.15,
            t_count: 14,
            noise_pct: 5.0,
            seed: 0,
            population: 1e6,
            initial_fraction: 1e-3,
            horizon_days: 180,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWaves {
    pub waves: Vec<EpidemicWave>,
    pub truth: Vec<SirParams>,
    /// Peak day of each noiseless trajectory.
    pub true_peak_days: Vec<usize>,
}

impl SyntheticWaves {
    /// First wave whose noiseless peak falls strictly after the fit window
    /// and strictly before the horizon.
    pub fn target_index(&self, fit_window: usize) -> Option<usize> {
        self.true_peak_days
            .iter()
            .zip(&self.waves)
            .position(|(&p, w)| p >= fit_window && p + 1 < w.len())
    }
}

/// Waves with rates drawn uniformly from `center ± spread`, simulated from a
/// common initial fraction and observed with multiplicative Gaussian noise
/// `I·max(0, 1 + noise_pct/100·ξ)`, capped at the population.
pub fn gen_synthetic_waves(cfg: &SyntheticWaveConfig) -> Result<SyntheticWaves> {
    let c = cfg.center;
    if !(cfg.spread >= 0.0) || c.beta - cfg.spread < 0.0 || c.gamma - cfg.spread < 0.0 {
        return Err(invalid("center ± spread must stay nonnegative"));
    }
    if cfg.t_count == 0 || cfg.horizon_days == 0 {
        return Err(invalid("t_count and horizon_days must be positive"));
    }
    if !(cfg.noise_pct >= 0.0) || !(cfg.population > 0.0) || !(cfg.initial_fraction > 0.0 && cfg.initial_fraction < 1.0) {
        return Err(invalid("noise must be >= 0, population > 0 and initial_fraction in (0, 1)"));
    }
    let mut g = rng::seeded(cfg.seed);
    let t0 = NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date");
    let mut out = SyntheticWaves {
        waves: Vec::with_capacity(cfg.t_count),
        truth: Vec::with_capacity(cfg.t_count),
        true_peak_days: Vec::with_capacity(cfg.t_count),
    };
    for t in 0..cfg.t_count {
        let beta = c.beta + cfg.spread * (2.0 * g.random::<f64>() - 1.0);
        let gamma = c.gamma + cfg.spread * (2.0 * g.random::<f64>() - 1.0);
        let params = SirParams::new(beta, gamma)?;
        let traj = sir_simulate(
            params,
            cfg.population * (1.0 - cfg.initial_fraction),
            cfg.population * cfg.initial_fraction,
            0.0,
            cfg.population,
            cfg.horizon_days - 1,
            DEFAULT_DT,
        )?;
        let observed = traj
            .i
            .iter()
            .map(|v| (v * (1.0 + cfg.noise_pct / 100.0 * rng::standard_normal(&mut g)).max(0.0)).min(cfg.population))
            .collect();
        out.true_peak_days.push(crate::sir::argmax(&traj.i));
        out.waves.push(EpidemicWave::new(format!("SYN{:02}", t + 1), cfg.population, observed, t0)?);
        out.truth.push(params);
    }
    Ok(out)
}

/// Settings of [`gen_domain_blobs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobConfig {
    pub t_domains: usize,
    pub p_classes: usize,
    pub dim: usize,
    /// Rotation angle (radians) and offset length applied per domain.
    pub domain_shift: f64,
    pub n_per_domain: usize,
    pub seed: u64,
    /// Scale of the shared class centres.
    pub class_sep: f64,
    /// Within-class standard deviation.
    pub noise: f64,
    /// Optional per-domain sample counts overriding `n_per_domain`.
    pub sample_counts: Option<Vec<usize>>,
    /// Optional per-domain multipliers of `domain_shift`.
    pub shift_multipliers: Option<Vec<f64>>,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            t_domains: 4,
            p_classes: 3,
            dim: 2,
            domain_shift: 0.5,
            n_per_domain: 60,
            seed: 0,
            class_sep: 2.0,
            noise: 1.0,
            sample_counts: None,
            shift_multipliers: None,
        }
    }
}

fn rotate_in_plane(x: &[f64], u: &[f64], v: &[f64], angle: f64) -> Vec<f64> {
    let (a, b) = (linalg::dot(u, x), linalg::dot(v, x));
    let (s, c) = angle.sin_cos();
    let mut out = x.to_vec();
    linalg::axpy(a * (c - 1.0) - b * s, u, &mut out);
    linalg::axpy(a * s + b * (c - 1.0), v, &mut out);
    out
}

/// Gaussian class clusters with shared centres, moved per domain by a
/// rotation in a random plane and an offset in a random direction, both of
/// size `domain_shift` (times the domain's multiplier). Targets are one-hot;
/// classes cycle through the samples so every domain is balanced.
pub fn gen_domain_blobs(cfg: &BlobConfig) -> Result<Vec<TaskDataset>> {
    if cfg.t_domains < 2 || cfg.p_classes < 2 || cfg.dim == 0 {
        return Err(invalid("blobs need at least two domains, two classes and one dimension"));
    }
    if !(cfg.domain_shift >= 0.0 && cfg.noise >= 0.0 && cfg.class_sep >= 0.0) {
        return Err(invalid("shift, noise and class separation must be nonnegative"));
    }
    let counts = match &cfg.sample_counts {
        Some(c) if c.len() != cfg.t_domains => return Err(invalid("sample_counts needs one entry per domain")),
        Some(c) => c.clone(),
        None => vec![cfg.n_per_domain; cfg.t_domains],
    };
    if counts.contains(&0) {
        return Err(invalid("every domain needs samples"));
    }
    let mults = match &cfg.shift_multipliers {
        Some(m) if m.len() != cfg.t_domains => return Err(invalid("shift_multipliers needs one entry per domain")),
        Some(m) => m.clone(),
        None => vec![1.0; cfg.t_domains],
    };
    let mut g = rng::seeded(cfg.seed);
    let centres: Vec<Vec<f64>> = (0..cfg.p_classes)
        .map(|_| linalg::scale(cfg.class_sep, &rng::normal_vec(&mut g, cfg.dim)))
        .collect();
    let mut out = Vec::with_capacity(cfg.t_domains);
    for (t, (&n, &m)) in counts.iter().zip(&mults).enumerate() {
        let shift = cfg.domain_shift * m;
        let u = rng::unit_vector(&mut g, cfg.dim);
        let v = if cfg.dim >= 2 {
            let w = rng::normal_vec(&mut g, cfg.dim);
            let w = linalg::sub(&w, &linalg::scale(linalg::dot(&w, &u), &u));
            let n = linalg::norm(&w);
            linalg::scale(1.0 / n, &w)
        } else {
            vec![0.0]
        };
        let offset = linalg::scale(shift, &rng::unit_vector(&mut g, cfg.dim));
        let moved: Vec<Vec<f64>> = centres
            .iter()
            .map(|c| {
                let r = if cfg.dim >= 2 { rotate_in_plane(c, &u, &v, shift) } else { c.clone() };
                linalg::add(&r, &offset)
            })
            .collect();
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % cfg.p_classes;
            let x: Vec<f64> = moved[k].iter().map(|c| c + cfg.noise * rng::standard_normal(&mut g)).collect();
            let mut y = vec![0.0; cfg.p_classes];
            y[k] = 1.0;
            inputs.push(x);
            targets.push(y);
        }
        out.push(TaskDataset::new(t, inputs, targets)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_determinism_and_tiny_noise() {
        let truth = vec![vec![1.0, -1.0], vec![0.5, 2.0]];
        let a = gen_gaussian_scenario(&truth, 1e-12, &[3, 2], 9).unwrap();
        let b = gen_gaussian_scenario(&truth, 1e-12, &[3, 2], 9).unwrap();
        assert_eq!(a, b);
        for (d, th) in a.iter().zip(&truth) {
            assert!(d.targets().iter().all(|y| linalg::dist(y, th) < 1e-10));
        }
        assert!(gen_gaussian_scenario(&truth, 0.0, &[3, 2], 9).is_err());
    }

    #[test]
    fn identical_waves_without_spread_or_noise() {
        let cfg = SyntheticWaveConfig {
            spread: 0.0,
            noise_pct: 0.0,
            t_count: 3,
            ..Default::default()
        };
        let s = gen_synthetic_waves(&cfg).unwrap();
        assert_eq!(s.waves[0].infected, s.waves[2].infected);
    }

    #[test]
    fn plane_rotation_is_orthogonal() {
        let u = [1.0, 0.0, 0.0];
        let v = [0.0, 1.0, 0.0];
        let r = rotate_in_plane(&[1.0, 0.0, 2.0], &u, &v, std::f64::consts::FRAC_PI_2);
        assert!(linalg::dist(&r, &[0.0, 1.0, 2.0]) < 1e-15);
    }

    #[test]
    fn zero_shift_domains_share_a_distribution() {
        let cfg = BlobConfig {
            domain_shift: 0.0,
            n_per_domain: 3000,
            ..Default::default()
        };
        let d = gen_domain_blobs(&cfg).unwrap();
        let means: Vec<Vec<f64>> = d.iter().map(|t| linalg::mean(t.inputs())).collect();
        for m in &means[1..] {
            assert!(linalg::dist(m, &means[0]) < 0.15);
        }
        assert_eq!(d, gen_domain_blobs(&cfg).unwrap());
    }
}
