//! Seeded, splittable random streams.
//!
//! Every random draw in the engine comes from a [`RandomStream`]. A stream is a
//! `(seed, stream_id)` pair; the generator behind it is ChaCha12 keyed by the
//! seed with the stream id selecting an independent keystream. Sub-streams are
//! derived by hashing, so work split into fixed-size chunks draws the same
//! variates regardless of how many threads process the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// A reproducible source of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Materializes the generator. Two calls return generators producing
    /// identical sequences.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Derives an independent child stream identified by `tag`.
    pub fn substream(&self, tag: u64) -> Self {
        let mixed = splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D)));
        Self {
            seed: self.seed,
            stream_id: mixed,
        }
    }
}
