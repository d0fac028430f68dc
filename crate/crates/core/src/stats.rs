//! Small sample statistics and a paired nonparametric bootstrap.

use rand::Rng as _;
use rayon::prelude::*;

use crate::rng;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Fraction of bootstrap resamples on which `statistic` is strictly negative.
///
/// Each resample draws `n` observation indices with replacement and hands
/// `statistic` the resulting multiplicity of every observation, so paired
/// columns stay paired. Resample `r` uses substream `seed + r`, which makes
/// the result independent of the thread count.
pub fn bootstrap_negative_fraction<F>(n: usize, resamples: usize, seed: u64, statistic: F) -> f64
where
    F: Fn(&[u32]) -> f64 + Sync,
{
    let hits: usize = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::substream(seed, r as u64);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[g.random_range(0..n)] += 1;
            }
            usize::from(statistic(&counts) < 0.0)
        })
        .sum();
    hits as f64 / resamples as f64
}

/// Weighted mean of `column(i)` with integer weights from a bootstrap draw.
pub fn weighted_mean(counts: &[u32], column: impl Fn(usize) -> f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            total += c as f64 * column(i);
            weight += c as f64;
        }
    }
    total / weight
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_clear_sign() {
        let xs: Vec<f64> = (0..200).map(|i| -1.0 + 0.001 * i as f64).collect();
        let frac = bootstrap_negative_fraction(xs.len(), 200, 7, |c| weighted_mean(c, |i| xs[i]));
        assert_eq!(frac, 1.0);
        let frac = bootstrap_negative_fraction(xs.len(), 200, 7, |c| -weighted_mean(c, |i| xs[i]));
        assert_eq!(frac, 0.0);
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let a = bootstrap_negative_fraction(xs.len(), 300, 1, |c| weighted_mean(c, |i| xs[i]));
        let b = bootstrap_negative_fraction(xs.len(), 300, 1, |c| weighted_mean(c, |i| xs[i]));
        assert_eq!(a, b);
    }
}
