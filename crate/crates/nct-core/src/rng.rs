//! Seeded random streams.
//!
//! Every sampling routine draws from ChaCha8 seeded with the caller's seed.
//! Parallel work splits by assigning worker `w` the stream index `w` of the
//! same seed, and totals reduce in worker order, so output is a function of
//! the seed alone. ChaCha8 output is stable across platforms and releases of
//! `rand_chacha`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for worker `stream` of a seeded computation.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
