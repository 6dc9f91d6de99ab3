//! Seeded random streams.
//!
//! Every stochastic routine takes its randomness from a ChaCha20 generator
//! (`rand_chacha::ChaCha20Rng`). A run is identified by a `u64` seed, and
//! independent sub-streams of the same run are separated with ChaCha's
//! 64-bit stream selector, so path noise and channel noise never share
//! draws.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

/// Well-known sub-stream identifiers.
pub mod streams {
    pub const PATH: u64 = 0;
    pub const CHANNEL: u64 = 1;
    pub const TRAINING: u64 = 2;
}

/// Generator for sub-stream `stream` of run `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
