//! Hierarchical random streams.
//!
//! Every stochastic draw in the crate is addressed by a path such as
//! `[AGENT_DATA, mu_index, replication, agent]` below a master seed. The
//! stream for a path does not depend on which other paths were used or in
//! which order, so serial and parallel runs see identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stream domains. The first path element selects one of these.
pub mod domain {
    pub const AGENT_DATA: u64 = 0x01;
    pub const SUBMISSION: u64 = 0x02;
    pub const MECHANISM: u64 = 0x03;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn seed_for(&self, path: &[u64]) -> u64 {
        let mut h = splitmix64(self.master);
        for (depth, &p) in path.iter().enumerate() {
            h = splitmix64(h ^ splitmix64(p.wrapping_add((depth as u64 + 1) << 56)));
        }
        h
    }

    pub fn stream(&self, path: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed_for(path))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
