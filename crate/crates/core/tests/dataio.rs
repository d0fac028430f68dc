use chrono::{Duration, NaiveDate};
use crosslearn::dataio::{extract_waves, gen_synthetic_waves, parse_owid_reader, SyntheticWaveConfig, WaveExtractionConfig};
use crosslearn::Error;

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
}

/// 30 days for three countries: AAA constant 5 with one blank day, BBB
/// counting up from 0, CCC reporting only every other day.
fn csv_text() -> String {
    let mut s = String::from("iso_code,continent,date,new_cases,population\n");
    for k in 0..30 {
        let d = day0() + Duration::days(k);
        let a = if k == 15 { String::new() } else { "5".into() };
        s += &format!("AAA,X,{d},{a},1000\n");
        s += &format!("BBB,X,{d},{k},2000\n");
        let c = if k % 2 == 0 { "7" } else { "" };
        s += &format!("CCC,X,{d},{c},3000\n");
    }
    s
}

fn cfg(countries: &[&str], smoothing: usize, period: usize) -> WaveExtractionConfig {
    WaveExtractionConfig {
        smoothing_days: smoothing,
        infectious_period_days: period,
        wave_start: day0() + Duration::days(12),
        wave_length_days: 10,
        countries: countries.iter().map(|c| c.to_string()).collect(),
    }
}

#[test]
fn constant_counts_become_period_sums() {
    let rows = parse_owid_reader(csv_text().as_bytes()).unwrap();
    assert_eq!(rows.len(), 90);
    let waves = extract_waves(&rows, &cfg(&["AAA"], 7, 10)).unwrap();
    let w = &waves[0];
    assert_eq!(w.country, "AAA");
    assert_eq!(w.population, 1000.0);
    assert_eq!(w.len(), 10);
    for v in &w.infected {
        assert!((v - 50.0).abs() < 1e-9, "{v}");
    }
}

#[test]
fn linear_counts_survive_smoothing() {
    let rows = parse_owid_reader(csv_text().as_bytes()).unwrap();
    let waves = extract_waves(&rows, &cfg(&["BBB"], 5, 3)).unwrap();
    // smoothed day i is i; active is i + (i-1) + (i-2)
    for (j, v) in waves[0].infected.iter().enumerate() {
        let i = (12 + j) as f64;
        assert!((v - (3.0 * i - 3.0)).abs() < 1e-9);
    }
}

#[test]
fn sparse_country_is_rejected_by_name() {
    let rows = parse_owid_reader(csv_text().as_bytes()).unwrap();
    match extract_waves(&rows, &cfg(&["AAA", "CCC"], 7, 10)) {
        Err(Error::Country { country, .. }) => assert_eq!(country, "CCC"),
        other => panic!("expected a country error, got {other:?}"),
    }
    assert!(matches!(extract_waves(&rows, &cfg(&["ZZZ"], 7, 10)), Err(Error::Country { .. })));
}

#[test]
fn missing_column_is_reported() {
    let text = "iso_code,date,population\nAAA,2020-03-01,10\n";
    assert!(matches!(parse_owid_reader(text.as_bytes()), Err(Error::MissingColumn(c)) if c == "new_cases"));
}

#[test]
fn bad_date_names_the_line() {
    let text = "iso_code,date,new_cases,population\nAAA,2020-03-01,1,10\nAAA,03/02/2020,1,10\n";
    assert!(matches!(parse_owid_reader(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
}

#[test]
fn synthetic_waves_follow_the_seed() {
    let a = gen_synthetic_waves(&SyntheticWaveConfig { seed: 4, ..Default::default() }).unwrap();
    let b = gen_synthetic_waves(&SyntheticWaveConfig { seed: 4, ..Default::default() }).unwrap();
    let c = gen_synthetic_waves(&SyntheticWaveConfig { seed: 5, ..Default::default() }).unwrap();
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.waves, b.waves);
    assert_ne!(a.truth, c.truth);
    let cfg = SyntheticWaveConfig::default();
    for (p, w) in a.truth.iter().zip(&a.waves) {
        assert!((p.beta - cfg.center.beta).abs() <= cfg.spread);
        assert!((p.gamma - cfg.center.gamma).abs() <= cfg.spread);
        assert!(w.infected.iter().all(|&v| (0.0..=cfg.population).contains(&v)));
    }
}
