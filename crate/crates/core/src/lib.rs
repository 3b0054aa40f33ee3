//! Real-time rendering super-resolution: split-sum BRDF demodulation, an
//! H-shaped network that fuses unshuffled high-resolution G-buffers into a
//! low-resolution backbone, and the tooling to train and evaluate it.

pub mod bench;
pub mod brdf;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod hnet;
pub mod loss;
pub mod ops;
pub mod pipeline;
pub mod tensor;
pub mod threads;
pub mod train;

pub use error::{FuseError, Result};
pub use tensor::{DType, Scalar, Shape, Tensor};
