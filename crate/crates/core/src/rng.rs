//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream identified by
//! `(seed, stream)`, so parallel work keyed by a stable index reproduces the
//! same numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
