//! Seeded random streams.
//!
//! Every consumer that must be reproducible under parallel execution derives
//! its own ChaCha stream from `(seed, index)` instead of sharing a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids at or above this value are reserved for non-instance purposes.
pub const RESERVED_STREAM_BASE: u64 = 1 << 62;

/// RAU layout when geometry is frozen across a dataset.
pub const FROZEN_GEOMETRY_STREAM: u64 = RESERVED_STREAM_BASE;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` of the generator keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
