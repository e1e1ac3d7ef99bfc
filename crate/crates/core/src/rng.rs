//! Per-replica random streams.
//!
//! Every replica draws from its own ChaCha8 stream selected by
//! `(master_seed, replica_index)`, so results never depend on the order in
//! which replicas are evaluated. Independent campaigns sharing one master seed
//! (the two sides of a stability test, say) are separated with [`SeedSpec::derive`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replica_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replica_index: u64) -> Self {
        Self {
            master_seed,
            replica_index,
        }
    }

    /// The generator for this replica. A pure function of the two fields.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.replica_index);
        rng
    }

    /// A seed for an independent campaign labelled `tag` under the same master seed.
    pub fn derive(&self, tag: u64) -> SeedSpec {
        SeedSpec {
            master_seed: mix(self.master_seed ^ mix(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
            replica_index: self.replica_index,
        }
    }

    pub fn with_replica(&self, replica_index: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.master_seed,
            replica_index,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
