//! Forward and backward kernels on plain tensors. The gradient tape in
//! [`crate::autodiff`] wires these together.

pub mod conv;
pub mod geometry;
pub mod pixel;
pub mod pool;
pub mod resample;

pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvSpec};
pub use geometry::Dihedral;
pub use pixel::{pixel_shuffle, pixel_unshuffle};
pub use pool::{pool2d_backward, pool2d_forward, PoolKind, PoolSpec};
pub use resample::{upsample2_backward, upsample2_forward, Upsampler};

use crate::real::Real;
use crate::tensor::Tensor;

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes gradient where the input was strictly positive; zero at and below 0.
pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &[T]) -> Vec<T> {
    x.data()
        .iter()
        .zip(grad_out)
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect()
}
