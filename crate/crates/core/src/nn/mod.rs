//! Causal layers as tape ops.
//!
//! Every op here is causal along the time axis: output frame `t` reads input
//! frames `<= t` only. Mutable per-stream state (normalization statistics,
//! recurrent states) is owned by the caller, never by the layer.

mod activation;
mod conv;
mod linear;
mod norm;
mod rnn;

#[cfg(any(test, feature = "gradcheck"))]
pub mod gradcheck;

pub use activation::{prelu, prelu_value, Activation};
pub use conv::{
    conv2d_causal, conv_geom, depthwise_conv_causal, feature_downsample, feature_upsample, resample_geom,
    ConvSpec, RESAMPLE_KERNEL,
};
pub use linear::feed_forward;
pub use norm::{cln, cln_streaming, framewise_ln, layer_norm, NormKind, NormState, NORM_EPS};
pub use rnn::{gru_step, lstm_step, rnn_sequence, RnnKind, RnnSpec, RnnState, RnnWeights};
