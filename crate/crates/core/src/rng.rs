//! Seeding for every random stream in the crate.
//!
//! All sampling goes through [`ChaCha8Rng`], whose output for a given seed is
//! fixed across platforms and releases of `rand_chacha`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type GraphRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> GraphRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Child seed for a sub-stream, e.g. one restart or one benchmark replicate.
    pub fn derive(self, tags: &[u64]) -> RngSeed {
        let mut h = splitmix64(self.0 ^ 0x6a09_e667_f3bc_c908);
        for &t in tags {
            h = splitmix64(h ^ splitmix64(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        RngSeed(h)
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
