//! A small convolutional classifier for 12×12 lung blocks, written from
//! scratch: layer kernels, reverse-mode gradients, seeded SGD training,
//! finite-difference verification and a checksummed model file.

mod gradcheck;
mod io;
mod layers;
mod model;
mod train;

pub use gradcheck::{gradient_check, gradient_check_with, relative_error, GradientCheck};
pub use io::{read_model, write_model, MODEL_VERSION};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward,
    maxpool2d_forward, softmax, softmax_cross_entropy, Real, Shape, Tensor,
};
pub use model::{Architecture, CnnModel, Grads, Layer, LayerSpec, Trace};
pub use train::{
    argmax, backprop_step, block_tensor, predict, train, BatchOutcome, TrainConfig, TrainHistory,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("max pooling needs even height and width, got {0}")]
    OddDimension(Shape),
    #[error("layer shapes do not chain: {0}")]
    ShapeChainBroken(String),
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("loss became non-finite (training diverged)")]
    NonFiniteLoss,
    #[error("model has a non-finite parameter")]
    NonFiniteParameter,
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model file version {0} is not supported")]
    VersionMismatch(u32),
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("model file truncated")]
    Truncated,
}
