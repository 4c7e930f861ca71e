//! Counter-based seeding.
//!
//! Every random stream is keyed by `(seed, experiment, point, chunk)`, so
//! a sample never depends on which thread produced it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of counters into one 64-bit key.
pub fn key(seed: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Independent generator for one `(seed, counters...)` tuple.
pub fn stream(seed: u64, counters: &[u64]) -> ChaCha8Rng {
    let k = key(seed, counters);
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(k.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Experiment tags used as the first counter.
pub mod tag {
    pub const SHOTS: u64 = 1;
    pub const HERALD: u64 = 2;
    pub const CALIB_STEP1: u64 = 11;
    pub const CALIB_STEP2: u64 = 12;
    pub const CALIB_STEP3: u64 = 13;
    pub const CALIB_STEP4: u64 = 14;
    pub const MULTISTART: u64 = 21;
}
