//! Deterministic seed derivation.
//!
//! Every random stream in an experiment is keyed by a base seed and a path of
//! stream identifiers (trial, base station, purpose), so results never depend
//! on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers used when deriving child seeds.
pub mod stream {
    pub const CHANNEL: u64 = 0x6368_616e;
    pub const OPTIMIZER: u64 = 0x6f70_7469;
    pub const WAVEFORM: u64 = 0x7761_7665;
    pub const RESTART: u64 = 0x7265_7374;
    pub const JITTER: u64 = 0x6a69_7474;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold a path of identifiers into a child seed.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &id| splitmix64(acc ^ splitmix64(id)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
