//! Density scores read off the input Jacobian of a joint-embedding encoder.
//!
//! An encoder trained so that its embeddings look like `N(0, I/K)` has to
//! stretch dense regions of input space and squeeze sparse ones. The sum of
//! the log singular values of its input Jacobian therefore tracks the log
//! density of the data, up to an additive constant. This crate holds the
//! whole numerical pipeline behind that observation:
//!
//! - [`linalg`]: dense matrices, one-sided Jacobi singular values, log-volume.
//! - [`encoder`]: smooth MLP encoders with exact input Jacobians and backprop.
//! - [`synthdata`]: Gaussian-mixture generator worlds with exact log-densities.
//! - [`jepa`]: invariance + moment-matching objective and the training loop.
//! - [`score`]: the Jacobian score, its Monte-Carlo form, and Langevin sampling.
//! - [`spherecheck`]: norm concentration of normalized Gaussians.
//! - [`eval`]: Pearson correlation cells, ranking, histograms, separation.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! thread pools live in the `jepa-score` companion crate.

#![no_std]
#![deny(unsafe_code)]
// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod num;

pub mod encoder;
pub mod eval;
pub mod jepa;
pub mod linalg;
pub mod score;
pub mod spherecheck;
pub mod synthdata;

pub use error::{Error, Result};
pub use num::derive_seed;

pub use encoder::{Activation, Encoder, EncoderParams, EncoderSpec, Gradients, Layer};
pub use linalg::{log_singular_volume, singular_values, Matrix};
pub use score::{jepa_score, ScoreConfig, ScoreReport};

/// The RNG used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeded generator on a given stream; streams of one seed are independent.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
