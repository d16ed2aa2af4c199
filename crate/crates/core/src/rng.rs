//! Seed fan-out.
//!
//! A single root seed is expanded into named child streams, one per call site
//! (and per batch or draw where work is parallel). Child derivation depends
//! only on the parent value, the label and an index, so the order in which
//! parallel work is scheduled never changes the numbers it sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn new(root: u64) -> Self {
        Seed(root)
    }

    /// Child stream for `label`, disambiguated by `index`.
    pub fn child(self, label: &str, index: u64) -> Seed {
        let mut h = splitmix64(self.0 ^ 0x243f_6a88_85a3_08d3);
        h = splitmix64(h ^ fnv1a(label.as_bytes()));
        h = splitmix64(h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Seed(h)
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
