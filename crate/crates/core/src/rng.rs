//! Seedable, splittable random streams.
//!
//! Every stochastic routine takes a [`SnefyRng`]: ChaCha with 8 rounds, seeded from a `u64`
//! through `SeedableRng::seed_from_u64`. Independent sub-streams come from ChaCha's 64-bit
//! stream id, so results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SnefyRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SnefyRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator seeded by `seed`.
pub fn stream(seed: u64, stream: u64) -> SnefyRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
