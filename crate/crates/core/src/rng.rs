//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha12 stream, all keyed by
//! the same user seed. Row sampling and swap selection therefore never share
//! draws: a single-iterate MRK run samples exactly the same rows as an RK run
//! with the same seed, whatever the swap probability.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Identifier recorded in trace metadata and run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha12 (rand_chacha 0.9), seed_from_u64 + per-purpose stream id";

pub type StreamRng = ChaCha12Rng;

/// Purpose of a random stream. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    RowSampling = 0,
    Swap = 1,
    Init = 2,
    Generate = 3,
    Shuffle = 4,
    Plant = 5,
}

pub fn stream(seed: u64, purpose: Stream) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}
