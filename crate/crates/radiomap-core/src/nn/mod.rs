//! Minimal tensor operations with reverse-mode differentiation.
//!
//! Just enough machinery to build and train the convolutional field
//! predictor: rank-1/3/4 tensors, same/valid 2D cross-correlation and its
//! adjoint, 2x2 max pooling, a dense layer, four activations, a
//! define-by-run tape with scalar-loss backward, and Adam.
//!
//! Precision is a run-time choice: every kernel is generic over [`Scalar`]
//! (`f32` or `f64`). Gradient tests run in `f64`; training may use `f32`.

pub mod adam;
pub mod check;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use ops::{
    conv2d_forward, conv2d_transpose_forward, dense_forward, leaky_relu, maxpool2, relu,
    softplus, tanh, Padding,
};
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};
