//! Autoencoder-regularized GAN with latent-data distance constraints, its
//! ablations and baselines, and a mode-collapse evaluation suite on
//! low-dimensional synthetic data.
//!
//! Everything runs on a small tape-based reverse-mode autodiff ([`autodiff`])
//! over dense `f64` tensors, so results are bit-reproducible for a given seed.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod viz;

pub use autodiff::{Graph, Mode, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
