//! Dual-path spiking neural network (DPSNN) for low-latency, time-domain
//! speech enhancement.
//!
//! A learned 1-D convolution encodes overlapping waveform frames; a spiking
//! separator (grouped causal convolution with PLIF neurons, then a recurrent
//! ALIF layer, then a non-spiking readout) predicts a mask; a transposed
//! convolution decodes the masked features back to audio. Everything is
//! causal, so the model can run block-by-block with an algorithmic latency of
//! one encoder frame.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`).

pub mod error;
pub mod io;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod neurons;
pub mod scalar;
pub mod stream;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use network::{DpsnnModel, ForwardOptions, ForwardOutput, ModelConfig, SpikeStats};
pub use stream::{latency, LatencyReport, StreamState};
pub use tensor::{Array, Tape, Var};

pub type Array32 = Array<f32>;
pub type Array64 = Array<f64>;
pub type Model32 = DpsnnModel<f32>;
pub type Model64 = DpsnnModel<f64>;
pub type Stream32 = StreamState<f32>;
pub type Stream64 = StreamState<f64>;
