//! Seeded randomness. Every stochastic stage draws from a SplitMix64 stream.

use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
pub use rand_xoshiro::SplitMix64;

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Standard normal draw scaled by `sigma`.
pub fn gaussian(rng: &mut SplitMix64, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sigma
}

/// Uniform index in `0..n`. `n` must be non-zero.
pub fn index(rng: &mut SplitMix64, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Uniform draw in `[0, 1)`.
pub fn uniform(rng: &mut SplitMix64) -> f64 {
    rng.random::<f64>()
}
