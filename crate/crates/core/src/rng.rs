//! Deterministic random streams derived from one master seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STREAM_TRAIN_DATA: u64 = 0;
pub const STREAM_TEST_DATA: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_UNIFORM_BATCH: u64 = 3;
pub const STREAM_PENALTY_BATCH: u64 = 4;

/// ChaCha8 generator for `seed` on the given stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for `(master, tag)`, independent of the order seeds are used in.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(tag.wrapping_add(1 << 32));
    rng.next_u64()
}
