//! Seed splitting.
//!
//! A run is driven by one integer seed. Each consumer of randomness gets its
//! own ChaCha8 generator keyed by that seed (via `seed_from_u64`) and
//! distinguished by a fixed stream id, so the draws of one component never
//! shift the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Random episode initializations.
    EnvInit = 1,
    /// Epsilon-greedy coin flips and random actions.
    Exploration = 2,
    /// Q-network initial weights.
    WeightInit = 3,
    /// Replay-buffer minibatch indices.
    ReplaySampling = 4,
}

pub fn child_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
