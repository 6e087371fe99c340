//! Seeded random streams.
//!
//! All randomness in the crate comes from ChaCha8 (`rand_chacha`). A seed is
//! expanded to a 256-bit key with `SeedableRng::seed_from_u64`, and
//! independent streams of the same seed use ChaCha's 64-bit stream
//! selector. Both steps are specified bit-for-bit by their crates, so a given
//! `(seed, stream)` produces the same draws on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream_id` of `seed`. Stream 0 is the same generator as
/// [`seeded_rng`].
pub fn seeded_stream(seed: u64, stream_id: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream ids used across the crate, kept in one place so that no two
/// consumers share a stream by accident.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const FOLDS: u64 = 4;
    pub const SYNTH: u64 = 5;
}
