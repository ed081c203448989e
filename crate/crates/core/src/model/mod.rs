//! The separation network: encoder, mixer, UX blocks, masking and decoder.
//!
//! Parameters live in a [`ParamStore`] under hierarchical names
//! (`encoder.weight`, `mixer.0.conv.weight`, `blocks.0.right.3.rnn.w_hh`,
//! ...). The [`Layout`] resolves those names to indices once, and both the
//! tape forward pass ([`Graph`]) and the streaming engine
//! ([`StreamState`]) walk the same layout.

mod config;
mod forward;
mod params;
mod stream;

pub use config::{ModelConfig, PRESETS};
pub use forward::{Graph, Trace};
pub use params::{
    arrange_params, init_params, ConvParams, ConvStage, LeftUnit, Layout, NormParams, ParamStore, RecurrentUnit, UxBlock,
};
pub use stream::StreamState;

use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::framing::frame_channels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Scalar> {
    config: ModelConfig,
    layout: Layout,
    params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    /// Randomly initialised model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let (layout, params) = init_params(&config, seed)?;
        Ok(Self { config, layout, params })
    }

    /// Wraps existing parameters, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let (layout, params) = arrange_params(&config, params)?;
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    /// Records every parameter on `tape`; the result is indexed like the
    /// store.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.tensors().iter().map(|t| tape.param(t)).collect()
    }

    pub fn graph<'a>(&'a self, vars: &'a [Var]) -> Graph<'a> {
        Graph {
            cfg: &self.config,
            layout: &self.layout,
            p: vars,
        }
    }

    /// Offline inference on framed input `[M, K, L]`; returns `C` waveforms
    /// of `(K-1)·hop + L` samples.
    pub fn forward_offline(&self, x: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let mut tape = Tape::inference();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let trace = self.graph(&vars).forward(&mut tape, xv)?;
        tape.check_finite()?;
        let w = tape.value(trace.waveforms);
        let n = w.shape()[1];
        Ok(w.data().chunks(n).map(<[T]>::to_vec).collect())
    }

    /// Offline separation of an `M`-channel waveform. The tail is zero padded
    /// to a whole frame and the outputs are trimmed to the input length.
    pub fn separate_waveform(&self, mixture: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        self.check_channels(mixture)?;
        let len = mixture[0].len();
        let frames = frame_channels(mixture, &self.config.frame_spec())?;
        let mut out = self.forward_offline(&frames)?;
        out.iter_mut().for_each(|w| w.truncate(len));
        Ok(out)
    }

    /// Same as [`Model::separate_waveform`] but frame by frame through a
    /// [`StreamState`].
    pub fn stream_waveform(&self, mixture: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        self.check_channels(mixture)?;
        let cfg = self.config;
        let len = mixture[0].len();
        let frames = frame_channels(mixture, &cfg.frame_spec())?;
        let k = frames.shape()[1];
        let (m, l, c, hop) = (cfg.in_channels, cfg.frame_len, cfg.sources, cfg.hop);
        let mut state = StreamState::new(self)?;
        let mut outs = vec![Vec::with_capacity(len + l); c];
        let mut frame = vec![T::zero(); m * l];
        let mut emitted = vec![T::zero(); c * hop];
        for t in 0..k {
            for ch in 0..m {
                let src = (ch * k + t) * l;
                frame[ch * l..(ch + 1) * l].copy_from_slice(&frames.data()[src..src + l]);
            }
            self.stream_frame(&mut state, &frame, &mut emitted)?;
            for (ch, o) in outs.iter_mut().enumerate() {
                o.extend_from_slice(&emitted[ch * hop..(ch + 1) * hop]);
            }
        }
        for (o, tail) in outs.iter_mut().zip(self.flush_stream(&mut state)) {
            o.extend(tail);
            o.truncate(len);
        }
        Ok(outs)
    }

    fn check_channels(&self, mixture: &[Vec<T>]) -> Result<()> {
        if mixture.len() != self.config.in_channels {
            return Err(shape_err("mixture channels", &[self.config.in_channels], &[mixture.len()]));
        }
        Ok(())
    }
}
