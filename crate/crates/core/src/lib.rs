//! Optimal-transport toolkit and a small Sinkhorn autoencoder trainer.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: point clouds, `L_p` costs and dense cost matrices.
//! - [`sinkhorn`]: entropic OT (plain and log-domain), rounding onto the
//!   transport polytope, and the debiased sharp Sinkhorn divergence.
//! - [`exact`]: Hungarian assignment, a brute-force permutation oracle,
//!   sliced Wasserstein and MMD.
//! - [`gaussian`]: closed-form 2-Wasserstein distance between Gaussians.
//! - [`diff`]: a matrix-valued reverse-mode tape with differentiable
//!   versions of the losses above.
//! - [`nets`]: MLP encoders/decoders, Lipschitz bounds and optimizers.
//! - [`priors`]: latent prior samplers and interpolation helpers.
//! - [`sae`]: training loops (SAE, HAE, W2GAE, encoder-only).
//! - [`datasets`]: swiss roll and Gaussian-mixture generators.
//! - [`sweep`]: the high-dimensional Gaussian matching sweep.
//! - [`checks`]: seeded property suites shared by the CLI.

// `!(x <= tol)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod datasets;
pub mod diff;
pub mod error;
pub mod exact;
pub mod gaussian;
pub mod measures;
pub mod nets;
pub mod priors;
pub mod sae;
pub mod sinkhorn;
pub mod sweep;

pub use error::{OtError, Result};
pub use measures::{CostMatrix, CostSpec, PointCloud};

/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
