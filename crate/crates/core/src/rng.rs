//! Splittable, counter-based random streams.
//!
//! A [`SeedStream`] is a 64-bit key. Child streams are derived by mixing the
//! parent key with an index, so the stream used by replicate `i` depends only
//! on `(master seed, i)` and never on worker scheduling. Draws come from
//! ChaCha8, whose output at word position `k` is a pure function of the key
//! and `k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn key(&self) -> u64 {
        self.0
    }

    /// Child stream `index`. Distinct indices give statistically independent
    /// streams; the same index always gives the same stream.
    pub fn split(&self, index: u64) -> Self {
        Self(splitmix64(self.0 ^ splitmix64(index.wrapping_mul(GOLDEN) ^ 0x5851_F42D_4C95_7F2D)))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
