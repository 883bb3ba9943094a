use crate::numerics::splitmix64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type PathRng = ChaCha8Rng;

/// Identifies the random stream of one path.
///
/// The stream is ChaCha8 keyed by `master_seed` with stream id `path_index`, so
/// the draws of a path depend only on this pair and never on scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub path_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        RngStream {
            master_seed,
            path_index,
        }
    }

    pub fn rng(&self) -> PathRng {
        let mut key = [0u8; 32];
        let mut s = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path_index);
        rng
    }

    /// Independent family of streams keyed by this stream and `tag`
    /// (e.g. inner futures of a nested Monte Carlo at a given outer state).
    pub fn substream(&self, tag: u64) -> RngStream {
        let seed = splitmix64(
            splitmix64(self.master_seed ^ 0x05EE_D0FC_411D) ^ splitmix64(self.path_index),
        ) ^ splitmix64(tag.wrapping_add(0xA5A5_A5A5));
        RngStream {
            master_seed: seed,
            path_index: 0,
        }
    }

    /// The `i`-th stream of the family rooted at this master seed.
    pub fn with_index(&self, path_index: u64) -> RngStream {
        RngStream {
            master_seed: self.master_seed,
            path_index,
        }
    }
}
