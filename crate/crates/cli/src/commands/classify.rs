//! `classify-demo`: the ε sweep on multi-domain blobs over several seeds.

use crosslearn::classify::{self, SweepRow};
use crosslearn::dataio::{self, BlobConfig};
use crosslearn::solvers::PrimalDualConfig;
use serde::{Deserialize, Serialize};

use super::{bail_config, Table};
use crate::config::RunConfig;
use crate::run::{Check, Failure, Outcome};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DemoParams {
    /// Seeds `seed..seed + seeds`; each one draws new blobs, a new split and
    /// new minibatch shuffles.
    seeds: u64,
    blobs: BlobConfig,
    /// Functional radii; the largest one should be big enough to leave
    /// every constraint inactive.
    eps_grid: Vec<f64>,
    solver: PrimalDualConfig,
    split_ratio: f64,
    min_wins: u64,
    /// Allowed gap, in accuracy points, between the largest radius and the
    /// separate baseline.
    huge_tolerance: f64,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            seeds: 10,
            blobs: BlobConfig::default(),
            eps_grid: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 1e6],
            solver: PrimalDualConfig {
                eta_p: 0.3,
                eta_d: 3.0,
                epochs: 500,
                ..PrimalDualConfig::default()
            },
            split_ratio: 0.5,
            min_wins: 7,
            huge_tolerance: 1.0,
        }
    }
}

fn row_record(seed: u64, label: &str, r: &SweepRow) -> Vec<String> {
    let mut rec = vec![seed.to_string(), label.to_string(), r.epsilon.to_string(), r.mean_accuracy.to_string()];
    rec.extend(r.accuracy.iter().map(|a| a.to_string()));
    rec.extend(r.duals.iter().map(|l| l.to_string()));
    rec
}

pub fn demo(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p: DemoParams = cfg.params()?;
    if p.seeds == 0 || p.min_wins > p.seeds {
        return Err(bail_config("need seeds >= 1 and min_wins <= seeds"));
    }
    if p.eps_grid.is_empty() || p.eps_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(bail_config("eps_grid must be a nonempty list of finite radii >= 0"));
    }
    if !(p.split_ratio > 0.0 && p.split_ratio < 1.0) {
        return Err(bail_config("split_ratio must lie in (0, 1)"));
    }
    let huge = p.eps_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t = p.blobs.t_domains;

    let mut out = Outcome::new(&p)?;
    let mut header = vec!["seed".to_string(), "method".into(), "epsilon".into(), "acc_mean".into()];
    header.extend((1..=t).map(|i| format!("acc_d{i}")));
    header.extend((1..=t).map(|i| format!("lambda_{i}")));
    let mut sweep_csv = Table::new(&header)?;
    let mut duals_csv = Table::new(["seed", "epsilon", "rank", "domain", "lambda", "active"])?;
    let mut summary_csv = Table::new(["seed", "best_epsilon", "best_acc", "separate_acc", "consensus_acc", "win"])?;

    let mut wins = 0;
    let mut min_dual = f64::INFINITY;
    let mut worst_huge_gap: f64 = 0.0;
    for s in cfg.seed..cfg.seed + p.seeds {
        let data = dataio::gen_domain_blobs(&BlobConfig {
            seed: s,
            ..p.blobs.clone()
        })?;
        let solver = PrimalDualConfig { seed: s, ..p.solver.clone() };
        let res = classify::train_eval_sweep(&data, &p.eps_grid, &solver, p.split_ratio, s)?;
        for r in &res.rows {
            sweep_csv.row(row_record(s, "crosslearn", r))?;
            min_dual = r.duals.iter().copied().fold(min_dual, f64::min);
            let prof = classify::dual_profile(&res, r.epsilon)?;
            for (rank, (domain, lambda)) in prof.entries.iter().enumerate() {
                duals_csv.row([
                    s.to_string(),
                    r.epsilon.to_string(),
                    (rank + 1).to_string(),
                    (domain + 1).to_string(),
                    lambda.to_string(),
                    (*lambda > 0.0).to_string(),
                ])?;
            }
        }
        sweep_csv.row(row_record(s, "separate", &res.separate))?;
        sweep_csv.row(row_record(s, "consensus", &res.consensus))?;

        let best = res.best_row();
        let win = best.mean_accuracy >= res.separate.mean_accuracy.max(res.consensus.mean_accuracy);
        wins += win as u64;
        let huge_row = res.row(huge).expect("grid radius present");
        worst_huge_gap = worst_huge_gap.max((huge_row.mean_accuracy - res.separate.mean_accuracy).abs());
        summary_csv.row([
            s.to_string(),
            best.epsilon.to_string(),
            best.mean_accuracy.to_string(),
            res.separate.mean_accuracy.to_string(),
            res.consensus.mean_accuracy.to_string(),
            win.to_string(),
        ])?;
    }
    out.add("sweep.csv", sweep_csv.into_bytes()?);
    out.add("duals.csv", duals_csv.into_bytes()?);
    out.add("summary.csv", summary_csv.into_bytes()?);
    out.check(Check::gate(
        "some radius matches both baselines",
        wins >= p.min_wins,
        format!("{wins}/{} seeds (need {})", p.seeds, p.min_wins),
    ));
    out.check(Check::gate("duals nonnegative", min_dual >= 0.0, format!("smallest multiplier {min_dual}")));
    out.check(Check::gate(
        "largest radius matches separate",
        worst_huge_gap <= p.huge_tolerance,
        format!("worst gap {worst_huge_gap:.3} points at eps {huge}"),
    ));
    Ok(out)
}
