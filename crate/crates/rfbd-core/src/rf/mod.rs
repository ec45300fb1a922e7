//! RF frontend: power-amplifier clipping, fading-channel propagation with
//! noise and phase offset, and decision-aided clipping-noise-cancellation
//! reception.

mod channel;
mod cnc;
mod pa;

pub use channel::{channel_apply, sample_channel, ChannelConfig, ChannelRealization};
pub use cnc::{cnc_receive, CncConfig};
pub use pa::{pa_clip, PaModel};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RfError {
    #[error("clipping threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("invalid channel configuration: {0}")]
    InvalidChannelConfig(String),
    #[error("frame length {got} does not match expected {expected}")]
    FrameLengthMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}
