//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream: the key encodes `(seed, replicate)`
//! and the 64-bit ChaCha stream id selects the consumer. Particle `id` always
//! draws from stream `id`, so the order in which events are processed never
//! changes the numbers a particle sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream id reserved for replicate-wide events (immigration, catastrophes,
/// environment jumps).
pub const GLOBAL_STREAM: u64 = 0;
/// Stream id reserved for initial-condition draws that are not tied to a
/// particle (e.g. the Poisson count of an initial configuration).
pub const INIT_STREAM: u64 = u64::MAX;
/// Stream id reserved for direct (oracle) simulations.
pub const ORACLE_STREAM: u64 = u64::MAX - 1;
/// Stream id reserved for the common noise of environment-driven levels.
pub const NOISE_STREAM: u64 = u64::MAX - 2;

/// Stream factory for one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateStreams {
    pub seed: u64,
    pub replicate: u64,
}

impl ReplicateStreams {
    pub fn new(seed: u64, replicate: u64) -> Self {
        Self { seed, replicate }
    }

    pub fn stream(&self, id: u64) -> StreamRng {
        stream(self.seed, self.replicate, id)
    }
}

pub fn stream(seed: u64, replicate: u64, id: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id);
    rng
}

/// Derives a sub-seed so that distinct experiments sharing a user seed get
/// unrelated keys.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, folded into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h.rotate_left(17)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream(7, 3, 11);
        let mut b = stream(7, 3, 11);
        let mut c = stream(7, 3, 12);
        let mut d = stream(7, 4, 11);
        let xa: Vec<u64> = (0..4).map(|_| a.random()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.random()).collect();
        let xc: Vec<u64> = (0..4).map(|_| c.random()).collect();
        let xd: Vec<u64> = (0..4).map(|_| d.random()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(xa, xd);
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "base"), derive_seed(1, "harris"));
        assert_eq!(derive_seed(1, "base"), derive_seed(1, "base"));
    }
}
