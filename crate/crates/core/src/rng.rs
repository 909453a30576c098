//! Seed plumbing. Every stochastic component draws from its own ChaCha
//! stream derived from a master seed and a stream label, so adding draws in
//! one component never shifts another component's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Mixes `seed` with a stream tag and an index (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64, index: u64) -> SimRng {
    rng_from(derive_seed(seed, stream, index))
}

// Stream tags.
pub(crate) const NETWORK: u64 = 1;
pub(crate) const FORECAST: u64 = 2;
pub(crate) const INCIDENTS: u64 = 3;
pub(crate) const FLEET: u64 = 4;
pub(crate) const ERV_SOLVER: u64 = 5;
pub(crate) const UAV_SOLVER: u64 = 6;
pub(crate) const OBSERVATION: u64 = 7;
pub(crate) const TRIAL: u64 = 8;
