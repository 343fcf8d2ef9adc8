//! Counter-based random streams.
//!
//! Every randomized routine draws item `i` from its own ChaCha stream keyed by
//! `(seed, domain, i)`, so outputs do not depend on how work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream namespaces. Distinct routines never share a stream.
pub mod domain {
    pub const SAMPLER: u64 = 1;
    pub const SPECTRAL: u64 = 2;
    pub const MARKOV: u64 = 3;
    pub const UPPER_REGULARITY: u64 = 4;
    pub const CONVEXITY: u64 = 5;
    pub const ITERATE: u64 = 6;
    pub const PIPELINE: u64 = 7;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The stream for item `index` of routine `domain` under `seed`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

/// Uniform in `(0, 1]`, safe to take logarithms of.
pub fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard normal via Box-Muller.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u = open_unit(rng);
    let v: f64 = rng.random();
    crate::math::sqrt(-2.0 * crate::math::ln(u)) * crate::math::cos(2.0 * core::f64::consts::PI * v)
}

/// Standard exponential.
pub fn exponential<R: Rng>(rng: &mut R) -> f64 {
    -crate::math::ln(open_unit(rng))
}
