//! Seeded random streams.
//!
//! Every run owns one ChaCha key derived from its seed. Independent consumers
//! (population sampling, sphere directions, Monte Carlo diagnostics) read
//! from separate ChaCha streams of that key, so changing how many draws one
//! consumer makes never shifts another consumer's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Population = 1,
    Perturbation = 2,
    Diagnostics = 3,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
