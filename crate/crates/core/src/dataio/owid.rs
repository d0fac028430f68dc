//! OWID-style COVID CSV ingestion and wave extraction.
//!
//! Only four columns are read: `iso_code`, `date`, `new_cases` and
//! `population`. Active infections are reconstructed as a trailing sum of
//! smoothed daily cases over an infectious period.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sir::EpidemicWave;

const REQUIRED: [&str; 4] = ["iso_code", "date", "new_cases", "population"];

/// Largest fraction of missing days tolerated inside the extraction window.
pub const MAX_MISSING_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct OwidRow {
    pub iso_code: String,
    pub date: NaiveDate,
    /// `None` for empty, unparseable or negative entries.
    pub new_cases: Option<f64>,
    pub population: Option<f64>,
}

pub fn parse_owid_csv(path: impl AsRef<Path>) -> Result<Vec<OwidRow>> {
    parse_owid_reader(std::fs::File::open(path)?)
}

/// Parses rows in file order. Extra columns are ignored; numeric fields
/// that do not parse become `None`.
pub fn parse_owid_reader<R: Read>(reader: R) -> Result<Vec<OwidRow>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(field(idx[1]), "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            detail: format!("bad date `{}`: {e}", field(idx[1])),
        })?;
        rows.push(OwidRow {
            iso_code: field(idx[0]).to_string(),
            date,
            new_cases: number(field(idx[2])).filter(|v| *v >= 0.0),
            population: number(field(idx[3])).filter(|v| *v > 0.0),
        });
    }
    Ok(rows)
}

fn number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveExtractionConfig {
    pub smoothing_days: usize,
    pub infectious_period_days: usize,
    pub wave_start: NaiveDate,
    pub wave_length_days: usize,
    pub countries: Vec<String>,
}

impl Default for WaveExtractionConfig {
    /// First wave of 2020 for fourteen countries on four continents.
    fn default() -> Self {
        Self {
            smoothing_days: 7,
            infectious_period_days: 10,
            wave_start: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            wave_length_days: 180,
            countries: [
                "ARG", "BRA", "CHL", "COL", "PER", "MEX", "USA", "CAN", "ESP", "ITA", "FRA", "DEU", "GBR", "ZAF",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl WaveExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_days == 0 || self.infectious_period_days == 0 {
            return Err(invalid("smoothing and infectious period must be at least one day"));
        }
        if self.wave_length_days < 2 {
            return Err(invalid("a wave needs at least two days"));
        }
        if self.countries.is_empty() {
            return Err(invalid("no countries requested"));
        }
        Ok(())
    }
}

/// One wave per requested country, in the requested order.
///
/// Per country: daily counts between the first and last reported day are
/// laid on a calendar grid, interior gaps are filled by linear
/// interpolation, counts are smoothed by a centered rolling mean and summed
/// over the trailing infectious period, and the result is cut to the
/// window. Window days outside the reported span are truncated.
pub fn extract_waves(rows: &[OwidRow], cfg: &WaveExtractionConfig) -> Result<Vec<EpidemicWave>> {
    cfg.validate()?;
    let mut by_country: BTreeMap<&str, Vec<&OwidRow>> = BTreeMap::new();
    for r in rows {
        by_country.entry(r.iso_code.as_str()).or_default().push(r);
    }
    cfg.countries
        .par_iter()
        .map(|c| {
            let rows = by_country.get(c.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            extract_one(c, rows, cfg)
        })
        .collect()
}

fn country_err(country: &str, reason: impl Into<String>) -> Error {
    Error::Country {
        country: country.to_string(),
        reason: reason.into(),
    }
}

fn extract_one(country: &str, rows: &[&OwidRow], cfg: &WaveExtractionConfig) -> Result<EpidemicWave> {
    if rows.is_empty() {
        return Err(country_err(country, "no rows"));
    }
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.date);
    let population = rows
        .iter()
        .rev()
        .find_map(|r| r.population)
        .ok_or_else(|| country_err(country, "no population"))?;

    let observed: Vec<(NaiveDate, f64)> = rows.iter().filter_map(|r| r.new_cases.map(|v| (r.date, v))).collect();
    let window_end = cfg.wave_start + Duration::days(cfg.wave_length_days as i64);
    let present = observed.iter().filter(|(d, _)| *d >= cfg.wave_start && *d < window_end).count();
    let missing = 1.0 - present as f64 / cfg.wave_length_days as f64;
    if missing > MAX_MISSING_FRACTION {
        return Err(country_err(
            country,
            format!("{:.0}% of the window is missing (limit {:.0}%)", 100.0 * missing, 100.0 * MAX_MISSING_FRACTION),
        ));
    }

    let first = observed[0].0;
    let last = observed[observed.len() - 1].0;
    let len = (last - first).num_days() as usize + 1;
    let mut daily = vec![f64::NAN; len];
    for (d, v) in &observed {
        // duplicate dates keep the last entry
        daily[(*d - first).num_days() as usize] = *v;
    }
    interpolate_gaps(&mut daily);
    let smoothed = centered_mean(&daily, cfg.smoothing_days);
    let active = trailing_sum(&smoothed, cfg.infectious_period_days);

    let start = cfg.wave_start.max(first);
    let end = window_end.min(last + Duration::days(1));
    let lo = (start - first).num_days() as usize;
    let hi = (end - first).num_days() as usize;
    if hi < lo + 2 {
        return Err(country_err(country, "window leaves fewer than two reported days"));
    }
    EpidemicWave::new(country, population, active[lo..hi].to_vec(), start).map_err(|e| country_err(country, e.to_string()))
}

/// Linear interpolation over NaN runs bounded by finite values on both
/// sides.
pub(crate) fn interpolate_gaps(v: &mut [f64]) {
    let mut prev: Option<usize> = None;
    for i in 0..v.len() {
        if v[i].is_nan() {
            continue;
        }
        if let Some(p) = prev {
            let gap = i - p;
            for k in 1..gap {
                let w = k as f64 / gap as f64;
                v[p + k] = (1.0 - w) * v[p] + w * v[i];
            }
        }
        prev = Some(i);
    }
}

/// Centered rolling mean over `w` days; the window shrinks at the ends.
pub(crate) fn centered_mean(v: &[f64], w: usize) -> Vec<f64> {
    let back = (w - 1) / 2;
    let fwd = w / 2;
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + fwd + 1).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Sum over the current day and the `p − 1` days before it.
pub(crate) fn trailing_sum(v: &[f64], p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for i in 0..v.len() {
        acc += v[i];
        if i >= p {
            acc -= v[i - p];
        }
        out.push(acc);
    }
    out
}
