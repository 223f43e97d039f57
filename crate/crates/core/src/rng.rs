//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is the user seed
//! followed by up to three counters (sample index, chain, sweep, ...).
//! Draws therefore depend only on the key, never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams of different consumers disjoint.
pub mod domain {
    pub const FIELD_SAMPLE: u64 = 1;
    pub const REWEIGHT: u64 = 2;
    pub const METROPOLIS: u64 = 3;
    pub const PROBE: u64 = 4;
    pub const HYPER: u64 = 5;
}

pub fn keyed(seed: u64, counters: &[u64]) -> ChaCha8Rng {
    assert!(counters.len() <= 3, "at most three stream counters");
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    for (i, c) in counters.iter().enumerate() {
        key[8 * (i + 1)..8 * (i + 2)].copy_from_slice(&c.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
