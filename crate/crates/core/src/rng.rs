//! Seeding and normal sampling.
//!
//! Every random stream in the crate is a `ChaCha8Rng`. Child streams are
//! derived from a master seed with [`mix_seed`], which is the SplitMix64
//! finalizer applied to `master ^ (index + 1) * golden`; distinct indices
//! give statistically independent, non-overlapping ChaCha streams.
//!
//! Standard normals come from the polar-free Box–Muller transform in
//! [`StdNormal`], so simulated data stays bit-identical regardless of the
//! version of any distribution crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream of `master`.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index.wrapping_add(1).wrapping_mul(GOLDEN))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box–Muller standard normal sampler. Caches the second variate of
/// each pair.
#[derive(Debug, Default, Clone)]
pub struct StdNormal {
    spare: Option<f64>,
}

impl StdNormal {
    pub fn new() -> Self {
        Self { spare: None }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        // u1 in (0, 1] keeps ln finite.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * t.sin());
        r * t.cos()
    }
}
