//! Numerical core of the gmf facial-emotion toolkit.
//!
//! Everything in this crate only needs an allocator: tensors with a
//! reverse-mode tape, the layer kernels, the model zoo, preprocessing and
//! augmentation of in-memory pixel grids, the optimizer loop, confusion
//! matrices, Grad-CAM and the Haar cascade detector. File formats, image
//! codecs and the command line live in the `gmf` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autograd;
pub mod data;
pub mod detect;
mod error;
pub mod eval;
pub mod frames;
mod gemm;
pub mod gradcam;
pub mod model;
pub mod nn;
pub mod raster;
mod scalar;
mod tensor;
pub mod train;

pub use autograd::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Number of emotion classes every model predicts.
pub const NUM_CLASSES: usize = 6;

/// Whether layers use batch statistics and stochastic regularization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
