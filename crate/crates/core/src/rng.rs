//! Named random streams derived from one master seed.
//!
//! Every (UE, purpose) pair owns an independent ChaCha stream, so adding a
//! draw for one purpose never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Block fading on links towards this UE.
    Fading = 0,
    /// Scheduler choices made by this UE.
    Mac = 1,
    /// Decode draws at this UE as receiver.
    Decode = 2,
    /// Packet generation phase of this UE.
    Traffic = 3,
    /// Run-level draws not tied to a UE.
    Global = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPlan {
    pub master_seed: u64,
}

impl RngPlan {
    pub fn new(master_seed: u64) -> Self {
        RngPlan { master_seed }
    }

    pub fn stream(&self, ue: u32, purpose: Purpose) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(((purpose as u64) << 32) | ue as u64);
        rng
    }

    /// One stream per UE for `purpose`, indexed by UE id.
    pub fn streams(&self, n_ue: usize, purpose: Purpose) -> Vec<SimRng> {
        (0..n_ue as u32)
            .map(|ue| self.stream(ue, purpose))
            .collect()
    }
}
