//! Lightweight image super-resolution built from hybrid pixel-unshuffled blocks.
//!
//! The crate contains a small tensor library with reverse-mode gradients,
//! the network operators and blocks, HPUN model assembly and cost counting,
//! image metrics, a trainer and the `hpun` command-line tool.

pub mod ablation;
pub mod autodiff;
pub mod blocks;
pub mod cli;
pub mod error;
pub mod imaging;
pub mod io;
pub mod model;
pub mod nn;
pub mod ops;
pub mod real;
pub mod tensor;
pub mod train;

pub use autodiff::{Grads, Tape, Var};
pub use error::{Error, ErrorClass, Result};
pub use model::{Model, ModelSpec, Variant};
pub use real::{DType, Real};
pub use tensor::Tensor;
