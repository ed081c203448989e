//! Whole-sequence forward pass recorded on a tape.

use alloc::vec::Vec;

use super::params::{ConvStage, Layout, NormParams, RecurrentUnit, UxBlock};
use super::ModelConfig;
use crate::autograd::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::framing::overlap_add_op;
use crate::nn::{
    conv2d_causal, feature_downsample, feature_upsample, feed_forward, layer_norm, prelu, rnn_sequence, NormKind,
};
use crate::scalar::Scalar;

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Trace {
    /// `[M, K, N]`, nonnegative.
    pub encoded: Var,
    /// `[C, K, N]`.
    pub mixed: Var,
    /// `[C, K, N]` in `(0, 1)`.
    pub masks: Var,
    /// `[C, K, N]`.
    pub separated: Var,
    /// `[C, K, L]`.
    pub frames: Var,
    /// `[C, (K-1)·hop + L]`.
    pub waveforms: Var,
}

/// Layer functions over tape variables; `p` maps parameter indices to vars.
pub struct Graph<'a> {
    pub cfg: &'a ModelConfig,
    pub layout: &'a Layout,
    pub p: &'a [Var],
}

impl Graph<'_> {
    fn norm<T: Scalar>(&self, tape: &mut Tape<T>, x: Var, n: &NormParams, kind: NormKind) -> Result<Var> {
        layer_norm(tape, kind, x, self.p[n.gamma], self.p[n.beta])
    }

    fn stage<T: Scalar>(&self, tape: &mut Tape<T>, x: Var, s: &ConvStage) -> Result<Var> {
        let y = conv2d_causal(tape, x, self.p[s.conv.weight], Some(self.p[s.conv.bias]), &s.conv.spec)?;
        let y = self.norm(tape, y, &s.norm, self.cfg.norm)?;
        prelu(tape, y, self.p[s.prelu])
    }

    /// `E = ReLU(W_e · norm(X))` for `X: [M, K, L]`.
    pub fn encode<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = tape.shape(x);
        if s.len() != 3 || s[0] != self.cfg.in_channels || s[2] != self.cfg.frame_len {
            return Err(shape_err("encode", &[self.cfg.in_channels, 0, self.cfg.frame_len], s));
        }
        let n = self.norm(tape, x, &self.layout.encoder_norm, self.cfg.norm)?;
        let y = feed_forward(tape, n, self.p[self.layout.encoder], None)?;
        Ok(tape.relu(y))
    }

    /// Two conv stages, `M → M → C` channels.
    pub fn mix<T: Scalar>(&self, tape: &mut Tape<T>, e: Var) -> Result<Var> {
        let y = self.stage(tape, e, &self.layout.mixer[0])?;
        self.stage(tape, y, &self.layout.mixer[1])
    }

    fn recurrent<T: Scalar>(&self, tape: &mut Tape<T>, x: Var, u: &RecurrentUnit) -> Result<Var> {
        let y = self.stage(tape, x, &u.stage)?;
        let y = rnn_sequence(tape, y, self.p[u.w_ih], self.p[u.w_hh], self.p[u.rnn_bias], u.rnn.kind)?;
        let y = feed_forward(tape, y, self.p[u.ff_weight], Some(self.p[u.ff_bias]))?;
        match u.up {
            Some((w, b)) => feature_upsample(tape, y, self.p[w], Some(self.p[b])),
            None => Ok(y),
        }
    }

    /// One UX block: `[C, K, N] → [C, K, N]`.
    pub fn ux_block<T: Scalar>(&self, tape: &mut Tape<T>, x: Var, block: &UxBlock) -> Result<Var> {
        let mut skips = Vec::with_capacity(block.left.len());
        let mut cur = x;
        for unit in &block.left {
            let c = &unit.conv;
            let y = conv2d_causal(tape, cur, self.p[c.weight], Some(self.p[c.bias]), &c.spec)?;
            cur = feature_downsample(tape, y, self.p[unit.down_weight], Some(self.p[unit.down_bias]))?;
            skips.push(y);
        }
        cur = self.recurrent(tape, cur, &block.bottom)?;
        for unit in &block.right {
            let joined = tape.concat(&[cur, skips[unit.level]])?;
            cur = self.recurrent(tape, joined, unit)?;
        }
        Ok(cur)
    }

    /// Residual UX blocks followed by a sigmoid.
    pub fn estimate_masks<T: Scalar>(&self, tape: &mut Tape<T>, mixed: Var) -> Result<Var> {
        let mut h = mixed;
        for block in &self.layout.blocks {
            let y = self.ux_block(tape, h, block)?;
            h = tape.add(y, h)?;
        }
        Ok(tape.sigmoid(h))
    }

    /// Applies every source mask to the reference-channel encoding.
    pub fn separate<T: Scalar>(&self, tape: &mut Tape<T>, masks: Var, encoded: Var) -> Result<Var> {
        let reference = tape.select(encoded, 0)?;
        let tiled = tape.tile(reference, tape.shape(masks)[0])?;
        tape.mul(masks, tiled)
    }

    /// Per-frame decoder: `[C, K, N] → [C, K, L]`.
    pub fn decode<T: Scalar>(&self, tape: &mut Tape<T>, separated: Var) -> Result<Var> {
        feed_forward(tape, separated, self.p[self.layout.decoder], None)
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Trace> {
        let encoded = self.encode(tape, x)?;
        let mixed = self.mix(tape, encoded)?;
        let masks = self.estimate_masks(tape, mixed)?;
        let separated = self.separate(tape, masks, encoded)?;
        let frames = self.decode(tape, separated)?;
        let waveforms = overlap_add_op(tape, frames, &self.cfg.frame_spec())?;
        Ok(Trace {
            encoded,
            mixed,
            masks,
            separated,
            frames,
            waveforms,
        })
    }
}
