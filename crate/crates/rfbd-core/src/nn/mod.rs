//! Minimal CPU training engine: 2-D convolution, dense, rectifier, dropout,
//! softmax cross-entropy and mean-squared-error losses, Adam, and binary
//! checkpoints.
//!
//! The engine is generic over the scalar type: training runs in `f32`,
//! gradient verification against finite differences runs in `f64`.
//! Batch work fans out over fixed-size chunks and gradients are reduced in
//! chunk order, so results are bit-identical for any worker count.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod loss;
mod net;
mod ops;
mod tensor;

pub use adam::{adam_step, adam_update_slice, AdamHyper};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{softmax_rows, LossKind, LossTarget};
pub use net::{
    BackwardOptions, BackwardOutput, LayerSpec, ModelParameters, Network, Padding, ParamEntry,
    Shape,
};
pub use tensor::Tensor;

use thiserror::Error;

/// Scalar type the engine computes in.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + 'static
{
    fn of_f64(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("finite conversion")
    }
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid layer stack: {0}")]
    InvalidSpec(String),
    #[error("loss kind does not match target kind")]
    LossMismatch,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
