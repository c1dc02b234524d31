//! Hadamard-domain building blocks for transform-domain neural networks.
//!
//! The crate is `no_std` compatible (it needs `alloc`) and contains only pure
//! computation:
//!
//! - [`hadamard`]: naive and fast Hadamard transforms in one and two dimensions,
//!   dyadic (XOR) convolution and a checker for the Hadamard convolution theorem.
//! - [`quantum`]: a real-amplitude statevector simulation of the hybrid
//!   quantum-classical Hadamard transform, with exact or shot-sampled readout.
//! - [`perceptron`]: the multi-path HT-perceptron layer (forward, backward,
//!   initialization).
//! - [`cost`]: parameter and multiply-accumulate accounting.
//! - [`nn`]: the small CNN training stack used for the MNIST comparison.
//!
//! Disable the default `std` feature to build without the standard library.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cost;
mod error;
pub mod hadamard;
pub mod nn;
pub mod perceptron;
pub mod quantum;
mod scalar;
mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::{Matrix, Tensor4};

/// Name of the pseudo-random generator used for every seeded operation.
///
/// ChaCha8 is platform independent, so a seed reproduces the same stream on
/// every target. Persisted metadata records this string.
pub const RNG_NAME: &str = "ChaCha8Rng";

/// The seeded generator type used across the crate.
pub type SeedRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeedRng {
    use rand::SeedableRng;
    SeedRng::seed_from_u64(seed)
}

/// Derives an independent sub-seed from a parent seed and a path of indices.
///
/// Uses the SplitMix64 finalizer, so the mapping is fixed across platforms and
/// independent of evaluation order.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = splitmix(seed ^ 0x6a09_e667_f3bc_c909);
    for &part in path {
        state = splitmix(state ^ splitmix(part.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
