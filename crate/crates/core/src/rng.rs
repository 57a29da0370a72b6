//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 keyed by the user seed, with the
//! 64-bit ChaCha stream id selecting an independent substream per purpose
//! (sketch, sampling, each k-means restart, ...). A categorical draw
//! consumes exactly one `u64` (one uniform variate in `[0, 1)`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Independent substreams of a single seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Gaussian test matrix of the range sketch.
    Sketch,
    /// Categorical draws of the feature sampler.
    Sampling,
    /// Synthetic data noise.
    Synthetic,
    /// k-means++ seeding of one restart.
    KmeansRestart(u32),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Sketch => 1,
            Stream::Sampling => 2,
            Stream::Synthetic => 3,
            Stream::KmeansRestart(i) => (1 << 32) | u64::from(i),
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// Seed of replicate `index` in a seed sweep (splitmix64 finalizer).
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One uniform variate in `[0, 1)`.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}
