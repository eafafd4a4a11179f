//! Seeded randomness.
//!
//! All stochastic steps draw from ChaCha8, whose output stream is fixed by
//! its specification and independent of platform or word size. Independent
//! streams are derived from a master seed with the SplitMix64 finalizer so
//! that, for example, the shuffle order of epoch 7 does not depend on how
//! many dropout masks were drawn in epoch 6.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod stream {
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const DROPOUT: u64 = 0x4452_4f50;
    pub const SYNTH: u64 = 0x5359_4e54;
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const FUSION: u64 = 0x4655_5349;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and an ordered list of stream identifiers.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}
