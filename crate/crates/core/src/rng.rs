//! Seeded random sources.
//!
//! Every generator in the crate draws from ChaCha8 seeded through
//! `SeedableRng::seed_from_u64`, and Gaussian variates come from
//! `rand_distr::StandardNormal` (ziggurat). Both are specified
//! independently of platform and word size, so a fixed seed reproduces
//! the same stream everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Substream for the `index`-th independent replicate of an experiment.
pub fn substream(base_seed: u64, index: u64) -> Rng {
    seeded(base_seed.wrapping_add(index))
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| standard_normal(rng)).collect()
}

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn unit_vector(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, dim);
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
