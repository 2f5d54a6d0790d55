//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by a 64-bit
//! seed and a stream id, so that the matrix sample, the optimizer noise and the
//! Monte Carlo draws for one seed never overlap. Gaussian variates use
//! `rand_distr::StandardNormal` (ziggurat method); uniforms on the open
//! interval use `rand::distr::Open01`.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Ginibre entries of the observed matrix.
    Sampling = 0,
    /// Index and Cauchy noise draws of the optimizer.
    Optimizer = 1,
    /// Monte Carlo cross-entropy draws.
    MonteCarlo = 2,
    /// Random initial parameters.
    Init = 3,
    /// Ground-truth parameters of synthetic experiments.
    Truth = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
