//! Order-independent seed derivation.
//!
//! Every stochastic draw in the pipeline is keyed by the master seed plus a
//! path of key parts (scenario fields, dates, stream names). Each key is
//! folded through SplitMix64 finalizers and used to seed a ChaCha8 stream, so
//! the value of a draw never depends on how many other draws happened before
//! it or on which thread evaluated it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, stable across platforms and toolchains.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey(u64);

impl SeedKey {
    pub fn new(master_seed: u64) -> Self {
        SeedKey(mix64(master_seed))
    }

    pub fn with(self, part: u64) -> Self {
        SeedKey(mix64(self.0 ^ mix64(part)))
    }

    pub fn with_str(self, part: &str) -> Self {
        self.with(hash_str(part))
    }

    pub fn with_f64(self, part: f64) -> Self {
        self.with(part.to_bits())
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
