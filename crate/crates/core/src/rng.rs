//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by a base
//! seed and a stream id, so replication `r` of an experiment gives the same
//! draws no matter which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
