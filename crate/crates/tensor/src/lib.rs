//! Minimal reverse-mode automatic differentiation over dense 4-D tensors.
//!
//! The engine records operations on a [`Tape`] and replays them backwards to
//! produce gradients. It carries exactly the layer vocabulary an
//! encoder-decoder audio network needs: strided convolutions, transposed
//! convolutions, batch normalization, a few pointwise nonlinearities,
//! channel concatenation, vector tiling, complex multiplication and the
//! regression losses. [`Adam`] updates parameters and [`checkpoint`] stores
//! them on disk.

pub mod adam;
pub mod checkpoint;
mod conv;
mod error;
pub mod gradcheck;
pub mod init;
mod ops;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::ConvSpec;
pub use error::TensorError;
pub use ops::{BatchNormMode, RunningStats};
pub use tape::{Tape, Var};
pub use tensor::{DType, Element, Tensor};

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
