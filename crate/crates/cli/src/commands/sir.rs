//! `sir-fit`, `sir-ablation` and `sir-synth`.

use std::path::PathBuf;
use std::time::Instant;

use crosslearn::dataio::{self, SyntheticWaveConfig, WaveExtractionConfig};
use crosslearn::sir::{self, Ablation, EpidemicWave, FitMode, SirFitConfig};
use serde::{Deserialize, Serialize};

use super::{bail_config, Table};
use crate::config::RunConfig;
use crate::run::{Check, Failure, Outcome};

/// Where the waves come from: an OWID-style CSV when `owid_path` is set,
/// the synthetic generator (seeded with the run seed) otherwise.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WaveSource {
    owid_path: Option<PathBuf>,
    extraction: WaveExtractionConfig,
    synthetic: SyntheticWaveConfig,
}

struct Waves {
    waves: Vec<EpidemicWave>,
    synthetic: Option<dataio::SyntheticWaves>,
}

impl WaveSource {
    fn validate(&self) -> Result<(), Failure> {
        match &self.owid_path {
            Some(p) if !p.is_file() => Err(bail_config(format!("OWID file {} not found", p.display()))),
            Some(_) => Ok(self.extraction.validate()?),
            None => Ok(()),
        }
    }

    fn load(&self, seed: u64) -> Result<Waves, Failure> {
        match &self.owid_path {
            Some(p) => {
                let rows = dataio::parse_owid_csv(p)?;
                Ok(Waves {
                    waves: dataio::extract_waves(&rows, &self.extraction)?,
                    synthetic: None,
                })
            }
            None => {
                let syn = dataio::gen_synthetic_waves(&SyntheticWaveConfig {
                    seed,
                    ..self.synthetic.clone()
                })?;
                Ok(Waves {
                    waves: syn.waves.clone(),
                    synthetic: Some(syn),
                })
            }
        }
    }
}

impl Waves {
    /// Index of `name`, or the default target: the first synthetic wave
    /// that peaks after the fit window, or the first country.
    fn target(&self, name: Option<&str>, fit_window: usize) -> Result<usize, Failure> {
        match (name, &self.synthetic) {
            (Some(n), _) => self
                .waves
                .iter()
                .position(|w| w.country == n)
                .ok_or_else(|| bail_config(format!("target `{n}` is not among the waves"))),
            (None, Some(syn)) => syn
                .target_index(fit_window)
                .ok_or_else(|| bail_config(format!("no synthetic wave peaks after day {fit_window}"))),
            (None, None) => Ok(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Separate,
    Consensus,
    Crosslearn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitParams {
    data: WaveSource,
    mode: Mode,
    epsilon: f64,
    /// Wave observed only on its first `fit_window` days; every other wave
    /// is fitted on its full length. `None` fits all waves in full.
    target: Option<String>,
    fit_window: Option<usize>,
    fit: SirFitConfig,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            data: WaveSource::default(),
            mode: Mode::Crosslearn,
            epsilon: 0.1,
            target: None,
            fit_window: Some(10),
            fit: SirFitConfig::default(),
        }
    }
}

pub fn fit(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p: FitParams = cfg.params()?;
    p.data.validate()?;
    p.fit.validate()?;
    if !(p.epsilon >= 0.0 && p.epsilon.is_finite()) {
        return Err(bail_config("epsilon must be finite and >= 0"));
    }
    if p.fit_window == Some(0) || p.fit_window == Some(1) {
        return Err(bail_config("fit_window must be at least 2 days"));
    }
    let data = p.data.load(cfg.seed)?;
    let target = match p.fit_window {
        Some(n) => Some((data.target(p.target.as_deref(), n)?, n)),
        None => None,
    };
    let windows: Vec<usize> = data
        .waves
        .iter()
        .enumerate()
        .map(|(t, w)| match target {
            Some((i, n)) if i == t => n,
            _ => w.len(),
        })
        .collect();
    if let Some((i, n)) = target {
        if n > data.waves[i].len() {
            return Err(bail_config(format!("fit_window {n} exceeds the {} observed days", data.waves[i].len())));
        }
    }
    let mode = match p.mode {
        Mode::Separate => FitMode::Separate,
        Mode::Consensus => FitMode::Consensus,
        Mode::Crosslearn => FitMode::CrossLearn(p.epsilon),
    };
    let result = sir::fit_waves(&data.waves, mode, &p.fit, &windows)?;

    let mut out = Outcome::new(&p)?;
    let mut params = Table::new(["country", "beta", "gamma"])?;
    for (w, prm) in data.waves.iter().zip(&result.per_country) {
        params.row([w.country.clone(), prm.beta.to_string(), prm.gamma.to_string()])?;
    }
    params.row(["centroid".to_string(), result.centroid.beta.to_string(), result.centroid.gamma.to_string()])?;
    out.add("params.csv", params.into_bytes()?);

    let mut metrics = Table::new([
        "country",
        "fit_window",
        "training_loss",
        "peak_error_pct",
        "lag_error_days",
        "peak_at_horizon",
    ])?;
    for ((w, prm), &n) in data.waves.iter().zip(&result.per_country).zip(&windows) {
        let loss = sir::sir_loss(w, *prm, n)?;
        let mut rec = vec![w.country.clone(), n.to_string(), loss.to_string()];
        match (n < w.len()).then(|| sir::evaluate_prediction(w, *prm, n)) {
            Some(Ok(m)) => rec.extend([
                m.peak_error_pct.to_string(),
                m.lag_error_days.to_string(),
                m.peak_at_horizon.to_string(),
            ]),
            // fully observed waves, or peaks inside the window, have no forecast
            _ => rec.extend([String::new(), String::new(), String::new()]),
        }
        metrics.row(rec)?;
    }
    out.add("metrics.csv", metrics.into_bytes()?);

    if let Some(rep) = &result.report {
        out.add("trace.csv", super::buffered(|b| rep.write_trace_csv(b))?);
    }
    out.unconverged = result.unconverged.clone();
    Ok(out)
}

fn default_grid() -> Vec<f64> {
    vec![0.0, 0.02, 0.03, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 1.0]
}

fn check_ablation_grid(grid: &[f64]) -> Result<(), Failure> {
    if !grid.contains(&0.0) || !grid.iter().any(|e| *e >= 1.0) || grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(bail_config("eps_grid must hold finite radii >= 0, including 0 and one >= 1"));
    }
    Ok(())
}

/// Peak errors reported for ARG with the default OWID window, logged next
/// to ours for comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Reference {
    country: String,
    crosslearn_peak_error_pct: f64,
    consensus_peak_error_pct: f64,
    separate_peak_error_pct: f64,
    lag_days: [i64; 3],
}

impl Default for Reference {
    fn default() -> Self {
        Self {
            country: "ARG".into(),
            crosslearn_peak_error_pct: 0.07,
            consensus_peak_error_pct: 76.38,
            separate_peak_error_pct: 2474.0,
            lag_days: [0, 8, 108],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AblationParams {
    data: WaveSource,
    target: Option<String>,
    fit_window: usize,
    eps_grid: Vec<f64>,
    fit: SirFitConfig,
    reference: Reference,
}

impl Default for AblationParams {
    fn default() -> Self {
        Self {
            data: WaveSource::default(),
            target: None,
            fit_window: 10,
            eps_grid: default_grid(),
            fit: SirFitConfig::default(),
            reference: Reference::default(),
        }
    }
}

fn ablation_rows(csv: &mut Table, prefix: &[String], ab: &Ablation) -> Result<(), Failure> {
    let mut emit = |method: &str, eps: String, prm: sir::SirParams, m: &sir::WaveMetrics, converged: bool| {
        let mut rec = prefix.to_vec();
        rec.extend([
            method.to_string(),
            eps,
            prm.beta.to_string(),
            prm.gamma.to_string(),
            m.peak_error_pct.to_string(),
            m.lag_error_days.to_string(),
            converged.to_string(),
        ]);
        csv.row(rec)
    };
    let t = ab.target;
    emit("separate", String::new(), ab.separate_fit.per_country[t], &ab.separate, ab.separate_fit.unconverged.is_empty())?;
    emit("consensus", String::new(), ab.consensus_fit.per_country[t], &ab.consensus, ab.consensus_fit.unconverged.is_empty())?;
    for r in &ab.rows {
        emit("crosslearn", r.epsilon.to_string(), r.params, &r.metrics, r.fit.unconverged.is_empty())?;
    }
    Ok(())
}

const ABLATION_COLUMNS: [&str; 7] = ["method", "epsilon", "beta", "gamma", "peak_error_pct", "lag_error_days", "converged"];

fn unconverged_cells(ab: &Ablation) -> usize {
    ab.rows.iter().filter(|r| !r.fit.unconverged.is_empty()).count()
}

pub fn ablation(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p: AblationParams = cfg.params()?;
    p.data.validate()?;
    p.fit.validate()?;
    check_ablation_grid(&p.eps_grid)?;
    if p.fit_window < 2 {
        return Err(bail_config("fit_window must be at least 2 days"));
    }
    let data = p.data.load(cfg.seed)?;
    let target = data.target(p.target.as_deref(), p.fit_window)?;
    let ab = sir::epsilon_ablation(&data.waves, target, &p.eps_grid, p.fit_window, &p.fit)?;

    let mut out = Outcome::new(&p)?;
    let mut csv = Table::new(["country"].into_iter().chain(ABLATION_COLUMNS))?;
    ablation_rows(&mut csv, &[data.waves[target].country.clone()], &ab)?;
    out.add("ablation.csv", csv.into_bytes()?);

    let best = ab.best_row();
    let (cl, cons, sep) = (
        best.metrics.peak_error_pct.abs(),
        ab.consensus.peak_error_pct.abs(),
        ab.separate.peak_error_pct.abs(),
    );
    let r = &p.reference;
    let ordering = cl < cons && cons < sep;
    let detail = format!(
        "|peak error| crosslearn {cl:.2}% (eps {}) consensus {cons:.2}% separate {sep:.2}%; lags {}/{}/{} days",
        best.epsilon, best.metrics.lag_error_days, ab.consensus.lag_error_days, ab.separate.lag_error_days
    );
    if data.synthetic.is_none() && data.waves[target].country == r.country {
        out.check(Check::reference(
            format!("{} ordering", r.country),
            ordering,
            format!(
                "{detail}; reference {}%/{}%/{}%, lags {}/{}/{} days",
                r.crosslearn_peak_error_pct,
                r.consensus_peak_error_pct,
                r.separate_peak_error_pct,
                r.lag_days[0],
                r.lag_days[1],
                r.lag_days[2]
            ),
        ));
    } else {
        out.check(Check::reference("ordering", ordering, detail));
    }
    let n_unconv = unconverged_cells(&ab);
    if n_unconv > 0 {
        out.check(Check::reference("admm convergence", false, format!("{n_unconv} radii hit the iteration cap")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthParams {
    /// Seeds `seed..seed + seeds` of the generator.
    seeds: u64,
    fit_window: usize,
    eps_grid: Vec<f64>,
    synthetic: SyntheticWaveConfig,
    fit: SirFitConfig,
    min_win_fraction: f64,
    time_limit_s: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seeds: 20,
            fit_window: 10,
            eps_grid: default_grid(),
            synthetic: SyntheticWaveConfig::default(),
            fit: SirFitConfig::default(),
            min_win_fraction: 0.8,
            time_limit_s: 300.0,
        }
    }
}

/// Per seed: forecast the first synthetic wave that peaks after the fit
/// window and count a win when the best grid radius has a strictly smaller
/// absolute peak error than both baselines.
pub fn synth(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p: SynthParams = cfg.params()?;
    p.fit.validate()?;
    check_ablation_grid(&p.eps_grid)?;
    if p.seeds == 0 || p.fit_window < 2 || !(0.0..=1.0).contains(&p.min_win_fraction) {
        return Err(bail_config("need seeds >= 1, fit_window >= 2 and min_win_fraction in [0, 1]"));
    }
    let start = Instant::now();
    let mut out = Outcome::new(&p)?;
    let mut detail = Table::new(["seed", "target"].into_iter().chain(ABLATION_COLUMNS))?;
    let mut summary = Table::new([
        "seed",
        "target",
        "best_epsilon",
        "abs_peak_crosslearn",
        "abs_peak_separate",
        "abs_peak_consensus",
        "win",
    ])?;
    let mut wins = 0;
    let mut unconverged = 0;
    for s in cfg.seed..cfg.seed + p.seeds {
        let syn = dataio::gen_synthetic_waves(&SyntheticWaveConfig {
            seed: s,
            ..p.synthetic.clone()
        })?;
        let Some(target) = syn.target_index(p.fit_window) else {
            summary.row([s.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), "false".into()])?;
            continue;
        };
        let ab = sir::epsilon_ablation(&syn.waves, target, &p.eps_grid, p.fit_window, &p.fit)?;
        let name = syn.waves[target].country.clone();
        ablation_rows(&mut detail, &[s.to_string(), name.clone()], &ab)?;
        let best = ab.best_row();
        let (cl, sep, cons) = (
            best.metrics.peak_error_pct.abs(),
            ab.separate.peak_error_pct.abs(),
            ab.consensus.peak_error_pct.abs(),
        );
        let win = cl < sep && cl < cons;
        wins += win as u64;
        unconverged += unconverged_cells(&ab);
        eprintln!("sir-synth: seed {s} target {name} best eps {} win {win}", best.epsilon);
        summary.row([
            s.to_string(),
            name,
            best.epsilon.to_string(),
            cl.to_string(),
            sep.to_string(),
            cons.to_string(),
            win.to_string(),
        ])?;
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = wins as f64 / p.seeds as f64;
    out.add("sir_synth.csv", detail.into_bytes()?);
    out.add("sir_synth_summary.csv", summary.into_bytes()?);
    out.check(Check::gate(
        "crosslearn beats both baselines",
        frac >= p.min_win_fraction,
        format!("{wins}/{} seeds (need {:.0}%)", p.seeds, 100.0 * p.min_win_fraction),
    ));
    out.check(Check::gate("runtime", secs < p.time_limit_s, format!("{secs:.1}s (limit {}s)", p.time_limit_s)));
    if unconverged > 0 {
        out.check(Check::reference("admm convergence", false, format!("{unconverged} cells hit the iteration cap")));
    }
    Ok(out)
}
