//! Frame-by-frame inference.
//!
//! Every layer keeps only what causality requires: convolutions hold their
//! last `k_t - 1` input frames, norms their running sums, recurrent units
//! their hidden states, and the decoder an overlap-add tail. Each frame runs
//! the same kernels as the tape ops, so the streamed output matches the
//! offline pass.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{ConvParams, ConvStage, NormParams, RecurrentUnit};
use super::Model;
use crate::error::{shape_err, Error, Result};
use crate::framing::StreamingOverlapAdd;
use crate::kernels::{conv_frame, conv_transpose_frame, sigmoid, vec_mat_acc, ConvGeom};
use crate::nn::{conv_geom, prelu_value, resample_geom, NormKind, NormState, RnnState, RnnWeights, RESAMPLE_KERNEL};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Past input frames of one causal convolution.
#[derive(Debug, Clone, PartialEq)]
struct ConvHistory<T> {
    geom: ConvGeom,
    frames: Vec<T>,
    head: usize,
    seen: usize,
}

impl<T: Scalar> ConvHistory<T> {
    fn new(geom: ConvGeom) -> Self {
        let slots = geom.k_t - 1;
        Self {
            geom,
            frames: vec![T::zero(); slots * geom.c_in * geom.f_in],
            head: 0,
            seen: 0,
        }
    }

    fn reset(&mut self) {
        self.frames.iter_mut().for_each(|v| *v = T::zero());
        self.head = 0;
        self.seen = 0;
    }

    /// Convolves `x` (`c_in × f_in`) with the stored context into `out`, then
    /// stores `x`.
    fn apply(&mut self, w: &[T], bias: &[T], x: &[T], out: &mut [T]) {
        let g = self.geom;
        let slots = g.k_t - 1;
        let size = g.c_in * g.f_in;
        {
            let frames = &self.frames;
            let (head, seen) = (self.head, self.seen);
            conv_frame(
                &g,
                w,
                Some(bias),
                |ci, dt| {
                    let age = slots - dt;
                    if age == 0 {
                        Some(&x[ci * g.f_in..(ci + 1) * g.f_in])
                    } else if age <= seen {
                        let slot = (head + slots - age) % slots;
                        let off = slot * size + ci * g.f_in;
                        Some(&frames[off..off + g.f_in])
                    } else {
                        None
                    }
                },
                out,
            );
        }
        if slots > 0 {
            self.frames[self.head * size..(self.head + 1) * size].copy_from_slice(x);
            self.head = (self.head + 1) % slots;
        }
        self.seen += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
struct StageState<T> {
    conv: ConvHistory<T>,
    norm: NormState,
}

#[derive(Debug, Clone, PartialEq)]
struct RecurrentState<T> {
    stage: StageState<T>,
    /// One recurrent state per channel.
    rnn: Vec<RnnState<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockState<T> {
    left: Vec<ConvHistory<T>>,
    bottom: RecurrentState<T>,
    right: Vec<RecurrentState<T>>,
}

/// Causal memory of one audio stream. Its size depends on the model only,
/// never on how long the stream has been running.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState<T> {
    config: super::ModelConfig,
    encoder_norm: NormState,
    mixer: [StageState<T>; 2],
    blocks: Vec<BlockState<T>>,
    ola: StreamingOverlapAdd<T>,
}

impl<T: Scalar> StreamState<T> {
    pub fn new(model: &Model<T>) -> Result<Self> {
        let cfg = *model.config();
        let n = cfg.latent;
        let stage = |s: &ConvStage, f: usize| -> Result<StageState<T>> {
            Ok(StageState {
                conv: ConvHistory::new(conv_geom(&s.conv.spec, f)?),
                norm: NormState::default(),
            })
        };
        let recurrent = |u: &RecurrentUnit| -> Result<RecurrentState<T>> {
            Ok(RecurrentState {
                stage: stage(&u.stage, cfg.resolution(u.level))?,
                rnn: (0..cfg.sources).map(|_| RnnState::new(&u.rnn)).collect(),
            })
        };
        let layout = model.layout();
        let blocks = layout
            .blocks
            .iter()
            .map(|b| {
                Ok(BlockState {
                    left: b
                        .left
                        .iter()
                        .enumerate()
                        .map(|(d, u)| Ok(ConvHistory::new(conv_geom(&u.conv.spec, cfg.resolution(d))?)))
                        .collect::<Result<_>>()?,
                    bottom: recurrent(&b.bottom)?,
                    right: b.right.iter().map(recurrent).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: cfg,
            encoder_norm: NormState::default(),
            mixer: [stage(&layout.mixer[0], n)?, stage(&layout.mixer[1], n)?],
            blocks,
            ola: StreamingOverlapAdd::new(cfg.frame_spec(), cfg.sources)?,
        })
    }

    /// Restarts the stream as a fresh sequence.
    pub fn reset(&mut self) {
        self.encoder_norm.reset();
        let reset_stage = |s: &mut StageState<T>| {
            s.conv.reset();
            s.norm.reset();
        };
        let reset_rec = |r: &mut RecurrentState<T>| {
            reset_stage(&mut r.stage);
            r.rnn.iter_mut().for_each(RnnState::reset);
        };
        self.mixer.iter_mut().for_each(reset_stage);
        for b in &mut self.blocks {
            b.left.iter_mut().for_each(ConvHistory::reset);
            reset_rec(&mut b.bottom);
            b.right.iter_mut().for_each(reset_rec);
        }
        self.ola.reset();
    }

    /// Frames processed since creation or the last reset.
    pub fn frames_seen(&self) -> usize {
        self.ola.frames_seen()
    }

    /// Scalars held in the state.
    pub fn footprint(&self) -> usize {
        let stage = |s: &StageState<T>| s.conv.frames.len() + 3;
        let rec = |r: &RecurrentState<T>| stage(&r.stage) + r.rnn.iter().map(|s| s.h.len() + s.c.len()).sum::<usize>();
        3 + self.mixer.iter().map(stage).sum::<usize>()
            + self
                .blocks
                .iter()
                .map(|b| {
                    b.left.iter().map(|h| h.frames.len()).sum::<usize>() + rec(&b.bottom) + b.right.iter().map(rec).sum::<usize>()
                })
                .sum::<usize>()
            + self.config.sources * self.config.frame_len
    }
}

impl<T: Scalar> Model<T> {
    fn data(&self, idx: usize) -> &[T] {
        self.params().tensors()[idx].data()
    }

    fn normalize(&self, state: &mut NormState, n: &NormParams, x: &[T], features: usize, out: &mut [T]) {
        let (g, b) = (self.data(n.gamma), self.data(n.beta));
        match self.config().norm {
            NormKind::Cumulative => state.normalize_frame(x, features, g, b, out),
            NormKind::Framewise => NormState::default().normalize_frame(x, features, g, b, out),
        }
    }

    fn conv(&self, hist: &mut ConvHistory<T>, c: &ConvParams, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); hist.geom.c_out * hist.geom.f_out];
        hist.apply(self.data(c.weight), self.data(c.bias), x, &mut out);
        out
    }

    fn stage_frame(&self, st: &mut StageState<T>, s: &ConvStage, x: &[T]) -> Vec<T> {
        let y = self.conv(&mut st.conv, &s.conv, x);
        let f = st.conv.geom.f_out;
        let mut z = vec![T::zero(); y.len()];
        self.normalize(&mut st.norm, &s.norm, &y, f, &mut z);
        let slope = self.data(s.prelu);
        for (i, v) in z.iter_mut().enumerate() {
            *v = prelu_value(*v, slope[i / f]);
        }
        z
    }

    fn recurrent_frame(&self, st: &mut RecurrentState<T>, u: &RecurrentUnit, x: &[T]) -> Result<Vec<T>> {
        let r = u.rnn.hidden_size;
        let y = self.stage_frame(&mut st.stage, &u.stage, x);
        let w = RnnWeights::new(u.rnn, self.data(u.w_ih), self.data(u.w_hh), self.data(u.rnn_bias))?;
        let (ffw, ffb) = (self.data(u.ff_weight), self.data(u.ff_bias));
        let c = st.rnn.len();
        let mut ff = vec![T::zero(); c * r];
        for (ch, rnn) in st.rnn.iter_mut().enumerate() {
            let h = rnn.step(&w, &y[ch * r..(ch + 1) * r])?;
            let o = &mut ff[ch * r..(ch + 1) * r];
            o.copy_from_slice(ffb);
            vec_mat_acc(h, ffw, o);
        }
        Ok(match u.up {
            Some((wi, bi)) => {
                let mut out = vec![T::zero(); 2 * c * r];
                conv_transpose_frame(c, RESAMPLE_KERNEL, 2, 1, r, self.data(wi), Some(self.data(bi)), &ff, &mut out);
                out
            }
            None => ff,
        })
    }

    /// Latent masks `C × N` for one mixed frame.
    fn masks_frame(&self, state: &mut StreamState<T>, mixed: Vec<T>) -> Result<Vec<T>> {
        let cfg = *self.config();
        let layout = self.layout();
        let mut h = mixed;
        for (block, bs) in layout.blocks.iter().zip(&mut state.blocks) {
            let mut skips = Vec::with_capacity(cfg.depth);
            let mut cur = h.clone();
            for (unit, hist) in block.left.iter().zip(&mut bs.left) {
                let y = self.conv(hist, &unit.conv, &cur);
                let g = resample_geom(cfg.sources, hist.geom.f_out);
                let mut down = vec![T::zero(); g.c_out * g.f_out];
                let (wd, bd) = (self.data(unit.down_weight), self.data(unit.down_bias));
                conv_frame(&g, wd, Some(bd), |ci, _| Some(&y[ci * g.f_in..(ci + 1) * g.f_in]), &mut down);
                skips.push(y);
                cur = down;
            }
            cur = self.recurrent_frame(&mut bs.bottom, &block.bottom, &cur)?;
            for (unit, rs) in block.right.iter().zip(&mut bs.right) {
                let mut joined = cur;
                joined.extend_from_slice(&skips[unit.level]);
                cur = self.recurrent_frame(rs, unit, &joined)?;
            }
            for (a, b) in cur.iter_mut().zip(&h) {
                *a = *a + *b;
            }
            h = cur;
        }
        h.iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok(h)
    }

    /// Processes one `M × L` frame (channel-major) and writes `C × hop`
    /// finished output samples (channel-major) to `out`.
    pub fn stream_frame(&self, state: &mut StreamState<T>, frame: &[T], out: &mut [T]) -> Result<()> {
        let cfg = *self.config();
        if state.config != cfg {
            return Err(Error::StateMismatch("configuration"));
        }
        let (m, l, n) = (cfg.in_channels, cfg.frame_len, cfg.latent);
        if frame.len() != m * l {
            return Err(shape_err("stream_frame", &[m, 1, l], &[frame.len()]));
        }
        let layout = self.layout();

        let mut normed = vec![T::zero(); m * l];
        self.normalize(&mut state.encoder_norm, &layout.encoder_norm, frame, l, &mut normed);
        let we = self.data(layout.encoder);
        let mut encoded = vec![T::zero(); m * n];
        for ch in 0..m {
            let e = &mut encoded[ch * n..(ch + 1) * n];
            vec_mat_acc(&normed[ch * l..(ch + 1) * l], we, e);
            e.iter_mut().for_each(|v| *v = if *v > T::zero() { *v } else { T::zero() });
        }

        let [s0, s1] = &mut state.mixer;
        let mid = self.stage_frame(s0, &layout.mixer[0], &encoded);
        let mixed = self.stage_frame(s1, &layout.mixer[1], &mid);
        let mut latent = self.masks_frame(state, mixed)?;
        for row in latent.chunks_mut(n) {
            for (v, &e) in row.iter_mut().zip(&encoded[..n]) {
                *v = *v * e;
            }
        }

        let wd = self.data(layout.decoder);
        let c = cfg.sources;
        let mut frames = vec![T::zero(); c * l];
        for ch in 0..c {
            vec_mat_acc(&latent[ch * n..(ch + 1) * n], wd, &mut frames[ch * l..(ch + 1) * l]);
        }
        state.ola.push(&frames, out)
    }

    /// Streaming step on a `[M, 1, L]` frame; returns `C × hop` samples.
    pub fn forward_streaming(&self, frame: &Tensor<T>, state: &mut StreamState<T>) -> Result<Vec<T>> {
        let cfg = self.config();
        if frame.shape() != [cfg.in_channels, 1, cfg.frame_len] {
            return Err(shape_err("forward_streaming", &[cfg.in_channels, 1, cfg.frame_len], frame.shape()));
        }
        let mut out = vec![T::zero(); cfg.sources * cfg.hop];
        self.stream_frame(state, frame.data(), &mut out)?;
        Ok(out)
    }

    /// Releases the final `L - hop` samples per source and resets the stream.
    pub fn flush_stream(&self, state: &mut StreamState<T>) -> Vec<Vec<T>> {
        let tail = state.ola.flush();
        state.reset();
        tail
    }
}
