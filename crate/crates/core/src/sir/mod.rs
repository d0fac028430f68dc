//! SIR epidemic dynamics and the wave-prediction experiment.
//!
//! `dS/dτ = −β S I / N`, `dI/dτ = β S I / N − γ I`, `dR/dτ = γ I`,
//! integrated with fixed-step classical Runge–Kutta and sampled once per
//! day. Fitting works on `I/N` so that countries of different sizes share
//! one `(β, γ)` scale.

mod fit;

pub use fit::{
    epsilon_ablation, fit_waves, fit_waves_from, wave_task, Ablation, AblationRow, FitMode, FitResult, SirFitConfig,
    SirModel,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    pub beta: f64,
    pub gamma: f64,
}

impl SirParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta >= 0.0 && gamma >= 0.0 && beta.is_finite() && gamma.is_finite()) {
            return Err(invalid(format!("SIR rates must be finite and >= 0, got beta={beta} gamma={gamma}")));
        }
        Ok(Self { beta, gamma })
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.beta, self.gamma]
    }

    /// Reads `(β, γ)` from a parameter vector, clamping at zero.
    pub fn from_slice(theta: &[f64]) -> Self {
        Self {
            beta: theta[0].max(0.0),
            gamma: theta[1].max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicWave {
    pub country: String,
    pub population: f64,
    /// Infected count per day, starting at `t0`.
    pub infected: Vec<f64>,
    pub t0: NaiveDate,
}

impl EpidemicWave {
    pub fn new(country: impl Into<String>, population: f64, infected: Vec<f64>, t0: NaiveDate) -> Result<Self> {
        let country = country.into();
        if !(population > 0.0 && population.is_finite()) {
            return Err(invalid(format!("{country}: population must be positive")));
        }
        if infected.len() < 2 {
            return Err(invalid(format!("{country}: a wave needs at least two days")));
        }
        if let Some(bad) = infected.iter().find(|v| !(**v >= 0.0 && **v <= population)) {
            return Err(invalid(format!("{country}: infected value {bad} outside [0, N]")));
        }
        Ok(Self {
            country,
            population,
            infected,
            t0,
        })
    }

    pub fn len(&self) -> usize {
        self.infected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infected.is_empty()
    }

    /// `I/N` per day.
    pub fn normalized(&self) -> Vec<f64> {
        self.infected.iter().map(|v| v / self.population).collect()
    }

    /// Day index of the observed maximum (first one on ties).
    pub fn peak_day(&self) -> usize {
        argmax(&self.infected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveMetrics {
    pub peak_error_pct: f64,
    pub lag_error_days: i64,
    /// The prediction is still rising at the end of the horizon, so its
    /// peak was taken at the last day.
    pub peak_at_horizon: bool,
}

/// Daily samples of the three compartments, days `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirTrajectory {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = k;
        }
    }
    best
}

fn steps_per_day(dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(invalid(format!("time step must lie in (0, 1] days, got {dt}")));
    }
    Ok((1.0 / dt - 1e-9).ceil() as usize)
}

#[inline]
fn rhs(beta_n: f64, gamma: f64, s: f64, i: f64) -> (f64, f64, f64) {
    let infection = beta_n * s * i;
    let recovery = gamma * i;
    (-infection, infection - recovery, recovery)
}

/// Integrates `days` days from `(s, i, r)` and calls `sample` with the
/// state at every day boundary, including day 0. `dt` is rounded down so a
/// whole number of steps fits in a day.
fn integrate(
    beta: f64,
    gamma: f64,
    n_pop: f64,
    state: (f64, f64, f64),
    days: usize,
    dt: f64,
    mut sample: impl FnMut(usize, f64, f64, f64) -> Result<()>,
) -> Result<()> {
    let k = steps_per_day(dt)?;
    let h = 1.0 / k as f64;
    let beta_n = beta / n_pop;
    let floor = -1e-9 * n_pop;
    let (mut s, mut i, mut r) = state;
    sample(0, s, i, r)?;
    for day in 1..=days {
        for _ in 0..k {
            let k1 = rhs(beta_n, gamma, s, i);
            let k2 = rhs(beta_n, gamma, s + 0.5 * h * k1.0, i + 0.5 * h * k1.1);
            let k3 = rhs(beta_n, gamma, s + 0.5 * h * k2.0, i + 0.5 * h * k2.1);
            let k4 = rhs(beta_n, gamma, s + h * k3.0, i + h * k3.1);
            s += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            i += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            r += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        }
        if s < floor || i < floor || r < floor || !(s.is_finite() && i.is_finite() && r.is_finite()) {
            return Err(Error::Integration {
                day,
                detail: format!("state ({s:.3e}, {i:.3e}, {r:.3e}) left the admissible range; reduce dt"),
            });
        }
        sample(day, s, i, r)?;
    }
    Ok(())
}

/// Classical RK4 trajectory of the SIR system sampled at days `0..=horizon`.
pub fn sir_simulate(
    params: SirParams,
    s0: f64,
    i0: f64,
    r0: f64,
    n_pop: f64,
    horizon_days: usize,
    dt: f64,
) -> Result<SirTrajectory> {
    if !(n_pop > 0.0) || [s0, i0, r0].iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("compartments must be nonnegative and the population positive"));
    }
    if ((s0 + i0 + r0) - n_pop).abs() > 1e-9 * n_pop {
        return Err(invalid(format!("s0 + i0 + r0 = {} differs from the population {n_pop}", s0 + i0 + r0)));
    }
    if horizon_days == 0 {
        return Err(invalid("horizon must be at least one day"));
    }
    let mut traj = SirTrajectory {
        s: Vec::with_capacity(horizon_days + 1),
        i: Vec::with_capacity(horizon_days + 1),
        r: Vec::with_capacity(horizon_days + 1),
    };
    integrate(params.beta, params.gamma, n_pop, (s0, i0, r0), horizon_days, dt, |day, s, i, r| {
        if ((s + i + r) - n_pop).abs() > 1e-9 * n_pop {
            return Err(Error::Integration {
                day,
                detail: format!("population drifted to {}", s + i + r),
            });
        }
        traj.s.push(s);
        traj.i.push(i);
        traj.r.push(r);
        Ok(())
    })?;
    Ok(traj)
}

/// Infected fraction at days `0..=days` starting from `I/N = i0`, `R = 0`.
pub(crate) fn infected_fraction(params: SirParams, i0: f64, days: usize, dt: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(days + 1);
    integrate(params.beta, params.gamma, 1.0, (1.0 - i0, i0, 0.0), days, dt, |_, _, i, _| {
        out.push(i);
        Ok(())
    })?;
    Ok(out)
}

/// Infected fractions for `K` rate pairs `(β, γ)` integrated in lockstep
/// from the same start, with the same arithmetic as [`infected_fraction`].
/// `None` when any trajectory leaves the admissible range.
pub(crate) fn infected_fractions<const K: usize>(rates: [(f64, f64); K], i0: f64, days: usize, dt: f64) -> Option<[Vec<f64>; K]> {
    let k = steps_per_day(dt).ok()?;
    let h = 1.0 / k as f64;
    let beta = rates.map(|r| r.0);
    let gamma = rates.map(|r| r.1);
    let floor = -1e-9;
    let (mut s, mut i, mut r) = ([1.0 - i0; K], [i0; K], [0.0; K]);
    let mut out: [Vec<f64>; K] = std::array::from_fn(|_| {
        let mut v = Vec::with_capacity(days + 1);
        v.push(i0);
        v
    });
    let deriv = |s: &[f64; K], i: &[f64; K]| {
        let mut d = ([0.0; K], [0.0; K], [0.0; K]);
        for j in 0..K {
            let (a, b, c) = rhs(beta[j], gamma[j], s[j], i[j]);
            d.0[j] = a;
            d.1[j] = b;
            d.2[j] = c;
        }
        d
    };
    let shift = |x: &[f64; K], c: f64, d: &[f64; K]| std::array::from_fn::<f64, K, _>(|j| x[j] + c * d[j]);
    for _ in 0..days {
        for _ in 0..k {
            let k1 = deriv(&s, &i);
            let k2 = deriv(&shift(&s, 0.5 * h, &k1.0), &shift(&i, 0.5 * h, &k1.1));
            let k3 = deriv(&shift(&s, 0.5 * h, &k2.0), &shift(&i, 0.5 * h, &k2.1));
            let k4 = deriv(&shift(&s, h, &k3.0), &shift(&i, h, &k3.1));
            for j in 0..K {
                s[j] += h / 6.0 * (k1.0[j] + 2.0 * k2.0[j] + 2.0 * k3.0[j] + k4.0[j]);
                i[j] += h / 6.0 * (k1.1[j] + 2.0 * k2.1[j] + 2.0 * k3.1[j] + k4.1[j]);
                r[j] += h / 6.0 * (k1.2[j] + 2.0 * k2.2[j] + 2.0 * k3.2[j] + k4.2[j]);
            }
        }
        for j in 0..K {
            if s[j] < floor || i[j] < floor || r[j] < floor || !(s[j].is_finite() && i[j].is_finite() && r[j].is_finite()) {
                return None;
            }
            out[j].push(i[j]);
        }
    }
    Some(out)
}

/// Mean squared error of `I/N` over the first `fit_window` days, simulating
/// from the wave's first observation.
pub fn sir_loss(wave: &EpidemicWave, params: SirParams, fit_window: usize) -> Result<f64> {
    if fit_window == 0 || fit_window > wave.len() {
        return Err(invalid(format!("fit window {fit_window} outside 1..={}", wave.len())));
    }
    let obs = wave.normalized();
    let sim = infected_fraction(params, obs[0], fit_window - 1, DEFAULT_DT)?;
    Ok(obs.iter().zip(&sim).map(|(o, p)| (o - p) * (o - p)).sum::<f64>() / fit_window as f64)
}

/// Peak height and timing errors of the forecast made with `params` from
/// the wave's initial condition, over the whole observed horizon.
pub fn evaluate_prediction(wave: &EpidemicWave, params: SirParams, fit_window: usize) -> Result<WaveMetrics> {
    let true_peak = wave.peak_day();
    if fit_window == 0 || fit_window > wave.len() {
        return Err(invalid(format!("fit window {fit_window} outside 1..={}", wave.len())));
    }
    if true_peak < fit_window.saturating_sub(1) {
        return Err(invalid(format!(
            "{}: the observed peak (day {true_peak}) lies inside the fit window",
            wave.country
        )));
    }
    let obs = wave.normalized();
    let pred = infected_fraction(params, obs[0], wave.len() - 1, DEFAULT_DT)?;
    let peak = argmax(&pred);
    let last = pred.len() - 1;
    Ok(WaveMetrics {
        peak_error_pct: 100.0 * (pred[peak] - obs[true_peak]) / obs[true_peak],
        lag_error_days: peak as i64 - true_peak as i64,
        peak_at_horizon: peak == last && pred[last] > pred[last - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(beta: f64, gamma: f64) -> SirParams {
        SirParams::new(beta, gamma).unwrap()
    }

    #[test]
    fn disease_free() {
        let tr = sir_simulate(p(0.5, 0.1), 1000.0, 0.0, 0.0, 1000.0, 30, 0.1).unwrap();
        assert!(tr.i.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_decay() {
        let tr = sir_simulate(p(0.0, 0.2), 990.0, 10.0, 0.0, 1000.0, 40, 0.1).unwrap();
        for (day, v) in tr.i.iter().enumerate() {
            let exact = 10.0 * (-0.2 * day as f64).exp();
            assert!((v - exact).abs() <= 1e-6 * exact);
        }
    }

    #[test]
    fn peak_where_effective_rate_crosses_recovery() {
        let params = p(0.5, 0.2);
        let n = 1e6;
        let tr = sir_simulate(params, n - 100.0, 100.0, 0.0, n, 200, 0.1).unwrap();
        let peak = argmax(&tr.i);
        let crossing = tr.s.iter().position(|s| params.beta * s / n <= params.gamma).unwrap();
        assert!((peak as i64 - crossing as i64).abs() <= 1);
        for k in 0..tr.s.len() {
            assert!((tr.s[k] + tr.i[k] + tr.r[k] - n).abs() <= 1e-9 * n);
        }
    }

    #[test]
    fn validation() {
        assert!(SirParams::new(-0.1, 0.0).is_err());
        assert!(sir_simulate(p(0.1, 0.1), 10.0, 1.0, 0.0, 100.0, 10, 0.1).is_err());
        assert!(sir_simulate(p(0.1, 0.1), 99.0, 1.0, 0.0, 100.0, 10, 0.0).is_err());
        let d = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        assert!(EpidemicWave::new("X", 10.0, vec![1.0, 20.0], d).is_err());
        assert!(EpidemicWave::new("X", 10.0, vec![1.0], d).is_err());
    }

    #[test]
    fn exact_prediction_has_no_error() {
        let params = p(0.45, 0.2);
        let i = infected_fraction(params, 1e-3, 120, DEFAULT_DT).unwrap();
        let d = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let wave = EpidemicWave::new("X", 1e6, i.iter().map(|v| v * 1e6).collect(), d).unwrap();
        let m = evaluate_prediction(&wave, params, 10).unwrap();
        assert!(m.peak_error_pct.abs() < 1e-9);
        assert_eq!(m.lag_error_days, 0);
        assert!(!m.peak_at_horizon);
        assert!(sir_loss(&wave, params, 30).unwrap() < 1e-24);
    }
}
