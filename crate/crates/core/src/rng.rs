//! Reproducible random streams.
//!
//! Replication `i` of a run with master seed `s` draws from ChaCha8 keyed by
//! `s` on stream `i`, so its numbers do not depend on how replications are
//! scheduled across threads.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as StreamRng;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
