//! Causal, streaming, time-domain speech separation.
//!
//! The crate is `no_std` (with `alloc`) so the numeric core can be embedded;
//! the `std` feature (on by default) only switches float intrinsics from
//! `libm` to the platform implementations.
//!
//! Layout:
//!
//! * [`tensor`] and [`autograd`]: dense tensors and a reverse-mode tape.
//! * [`nn`]: causal layers (convolutions, feature resampling, recurrent
//!   cells, cumulative normalization) as tape ops plus per-frame kernels.
//! * [`framing`]: framing and overlap-add, offline and streaming.
//! * [`model`]: the encoder / mixer / UX-block / decoder network.
//! * [`train`]: SI-SNR, permutation-invariant loss, Adam and the training loop.
//! * [`synth`]: image-method room simulation and mixture synthesis.
//! * [`profile`]: parameter and per-frame FLOP accounting.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autograd;
pub mod error;
pub mod framing;
pub mod kernels;
pub mod model;
pub mod nn;
pub mod profile;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autograd::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Init, Tensor};
