//! Framing and overlap-add.
//!
//! Frames are rectangular: frame `k` covers samples `[k·hop, k·hop + L)`.
//! Overlap-add divides every output sample by the number of frames covering
//! it, so `overlap_add(frame_signal(x))` reproduces `x` on the covered prefix.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{add_into, Backward, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for FrameSpec {
    /// 2 ms frames with 1 ms hop at 8 kHz.
    fn default() -> Self {
        Self {
            frame_len: 16,
            hop: 8,
            sample_rate: 8000,
        }
    }
}

impl FrameSpec {
    pub fn new(frame_len: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        let spec = Self {
            frame_len,
            hop,
            sample_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_len || self.sample_rate == 0 {
            return Err(Error::InvalidConfig("framing needs 0 < hop <= frame_len".into()));
        }
        Ok(())
    }

    /// Number of whole frames in `samples` samples (at least one).
    pub fn frame_count(&self, samples: usize) -> usize {
        if samples <= self.frame_len {
            1
        } else {
            (samples - self.frame_len) / self.hop + 1
        }
    }

    /// Length of the overlap-add output of `frames` frames.
    pub fn output_len(&self, frames: usize) -> usize {
        (frames - 1) * self.hop + self.frame_len
    }

    /// Smallest frame count whose output covers `samples` samples.
    pub fn frames_covering(&self, samples: usize) -> usize {
        if samples <= self.frame_len {
            1
        } else {
            (samples - self.frame_len).div_ceil(self.hop) + 1
        }
    }

    /// Number of frames `0..=last` that contain sample `n`.
    pub fn coverage(&self, n: usize, last: usize) -> usize {
        let hi = (n / self.hop).min(last);
        let lo = (n + 1).saturating_sub(self.frame_len).div_ceil(self.hop);
        hi + 1 - lo
    }
}

/// Splits `x` into `[K, L]` frames. Inputs shorter than one frame are
/// zero-padded on the right; a trailing remainder shorter than a hop is
/// dropped.
pub fn frame_signal<T: Scalar>(x: &[T], spec: &FrameSpec) -> Result<Tensor<T>> {
    spec.validate()?;
    if x.is_empty() {
        return Err(Error::EmptyInput("frame_signal"));
    }
    let l = spec.frame_len;
    let k = spec.frame_count(x.len());
    let mut data = vec![T::zero(); k * l];
    for (f, frame) in data.chunks_mut(l).enumerate() {
        let start = f * spec.hop;
        let end = (start + l).min(x.len());
        frame[..end - start].copy_from_slice(&x[start..end]);
    }
    Tensor::from_vec(&[k, l], data)
}

/// Frames every channel of a multi-channel signal into `[M, K, L]`, zero
/// padding on the right so that all samples are covered.
pub fn frame_channels<T: Scalar>(channels: &[Vec<T>], spec: &FrameSpec) -> Result<Tensor<T>> {
    spec.validate()?;
    let len = channels.first().map_or(0, |c| c.len());
    if len == 0 {
        return Err(Error::EmptyInput("frame_channels"));
    }
    if let Some(bad) = channels.iter().find(|c| c.len() != len) {
        return Err(shape_err("frame_channels", &[len], &[bad.len()]));
    }
    let k = spec.frames_covering(len);
    let padded_len = spec.output_len(k);
    let mut data = Vec::with_capacity(channels.len() * k * spec.frame_len);
    let mut padded = vec![T::zero(); padded_len];
    for ch in channels {
        padded[..len].copy_from_slice(ch);
        padded[len..].iter_mut().for_each(|v| *v = T::zero());
        data.extend(frame_signal(&padded, spec)?.into_data());
    }
    Tensor::from_vec(&[channels.len(), k, spec.frame_len], data)
}

/// Overlap-adds `[C, K, L]` frames into `C` waveforms of `(K-1)·hop + L`
/// samples.
pub fn overlap_add<T: Scalar>(frames: &Tensor<T>, spec: &FrameSpec) -> Result<Vec<Vec<T>>> {
    let (c, k) = ola_dims(frames.shape(), spec)?;
    let l = spec.frame_len;
    let n = spec.output_len(k);
    let d = frames.data();
    Ok((0..c)
        .map(|ch| {
            let mut out = vec![T::zero(); n];
            for f in 0..k {
                let src = &d[(ch * k + f) * l..(ch * k + f + 1) * l];
                for (o, &v) in out[f * spec.hop..].iter_mut().zip(src) {
                    *o = *o + v;
                }
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o = *o / T::of(spec.coverage(i, k - 1) as f64);
            }
            out
        })
        .collect())
}

fn ola_dims(shape: &[usize], spec: &FrameSpec) -> Result<(usize, usize)> {
    spec.validate()?;
    if shape.len() != 3 || shape[2] != spec.frame_len {
        return Err(shape_err("overlap_add", &[0, 0, spec.frame_len], shape));
    }
    Ok((shape[0], shape[1]))
}

/// Overlap-add as a tape op: `[C, K, L] → [C, (K-1)·hop + L]`.
pub fn overlap_add_op<T: Scalar>(tape: &mut Tape<T>, frames: Var, spec: &FrameSpec) -> Result<Var> {
    let (c, k) = ola_dims(tape.shape(frames), spec)?;
    let out = overlap_add(tape.value(frames), spec)?;
    let n = spec.output_len(k);
    let value = Tensor::raw(vec![c, n], out.concat());
    Ok(tape.push("overlap_add", value, &[frames], Box::new(OverlapAddRule { spec: *spec, c, k })))
}

struct OverlapAddRule {
    spec: FrameSpec,
    c: usize,
    k: usize,
}

impl<T: Scalar> Backward<T> for OverlapAddRule {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (l, hop) = (self.spec.frame_len, self.spec.hop);
        let n = self.spec.output_len(self.k);
        add_into(&mut grads[0], |d| {
            for ch in 0..self.c {
                for f in 0..self.k {
                    for i in 0..l {
                        let s = f * hop + i;
                        let cov = T::of(self.spec.coverage(s, self.k - 1) as f64);
                        let idx = (ch * self.k + f) * l + i;
                        d[idx] = d[idx] + g[ch * n + s] / cov;
                    }
                }
            }
        });
    }
}

/// Frame-by-frame overlap-add. Each pushed frame finalizes `hop` samples per
/// channel; [`StreamingOverlapAdd::flush`] releases the last `L - hop`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamingOverlapAdd<T> {
    spec: FrameSpec,
    channels: usize,
    /// Accumulator for samples `[frames·hop, frames·hop + L)`, per channel.
    acc: Vec<T>,
    frames: usize,
}

impl<T: Scalar> StreamingOverlapAdd<T> {
    pub fn new(spec: FrameSpec, channels: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            channels,
            acc: vec![T::zero(); channels * spec.frame_len],
            frames: 0,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames_seen(&self) -> usize {
        self.frames
    }

    pub fn reset(&mut self) {
        self.acc.iter_mut().for_each(|v| *v = T::zero());
        self.frames = 0;
    }

    /// Adds one `C × L` frame and writes `C × hop` finished samples to `out`
    /// (channel-major).
    pub fn push(&mut self, frame: &[T], out: &mut [T]) -> Result<()> {
        let (l, hop) = (self.spec.frame_len, self.spec.hop);
        if frame.len() != self.channels * l || out.len() != self.channels * hop {
            return Err(shape_err("streaming overlap-add", &[self.channels * l, self.channels * hop], &[frame.len(), out.len()]));
        }
        let base = self.frames * hop;
        for ch in 0..self.channels {
            let acc = &mut self.acc[ch * l..(ch + 1) * l];
            for (a, &v) in acc.iter_mut().zip(&frame[ch * l..(ch + 1) * l]) {
                *a = *a + v;
            }
            for i in 0..hop {
                out[ch * hop + i] = acc[i] / T::of(self.spec.coverage(base + i, self.frames) as f64);
            }
            acc.copy_within(hop.., 0);
            acc[l - hop..].iter_mut().for_each(|v| *v = T::zero());
        }
        self.frames += 1;
        Ok(())
    }

    /// Emits the pending `C × (L - hop)` tail (nothing before the first
    /// frame) and resets the stream.
    pub fn flush(&mut self) -> Vec<Vec<T>> {
        let (l, hop) = (self.spec.frame_len, self.spec.hop);
        let out = if self.frames == 0 {
            vec![Vec::new(); self.channels]
        } else {
            let base = self.frames * hop;
            (0..self.channels)
                .map(|ch| {
                    (0..l - hop)
                        .map(|i| self.acc[ch * l + i] / T::of(self.spec.coverage(base + i, self.frames - 1) as f64))
                        .collect()
                })
                .collect()
        };
        self.reset();
        out
    }
}

/// Sample-by-sample framing for live input. Each pushed multi-channel sample
/// may complete a frame; the result matches [`frame_channels`].
#[derive(Debug, Clone, PartialEq)]
pub struct StreamingFramer<T> {
    spec: FrameSpec,
    channels: usize,
    /// Channel-major `M × L` window.
    buf: Vec<T>,
    filled: usize,
    /// Samples pushed since the last emitted frame.
    pending: usize,
    emitted: bool,
}

impl<T: Scalar> StreamingFramer<T> {
    pub fn new(spec: FrameSpec, channels: usize) -> Result<Self> {
        spec.validate()?;
        if channels == 0 {
            return Err(Error::ZeroExtent);
        }
        Ok(Self {
            spec,
            channels,
            buf: vec![T::zero(); channels * spec.frame_len],
            filled: 0,
            pending: 0,
            emitted: false,
        })
    }

    fn advance(&mut self) {
        if self.emitted {
            let (l, hop) = (self.spec.frame_len, self.spec.hop);
            for row in self.buf.chunks_mut(l) {
                row.copy_within(hop.., 0);
            }
            self.filled = l - hop;
            self.emitted = false;
        }
    }

    /// Takes one sample per channel; returns the next `M × L` frame
    /// (channel-major) once it is complete.
    pub fn push(&mut self, sample: &[T]) -> Result<Option<&[T]>> {
        if sample.len() != self.channels {
            return Err(shape_err("streaming framer", &[self.channels], &[sample.len()]));
        }
        self.advance();
        let l = self.spec.frame_len;
        for (ch, &v) in sample.iter().enumerate() {
            self.buf[ch * l + self.filled] = v;
        }
        self.filled += 1;
        self.pending += 1;
        if self.filled == l {
            self.pending = 0;
            self.emitted = true;
            return Ok(Some(&self.buf));
        }
        Ok(None)
    }

    /// Zero pads and returns the last frame if some pushed samples are not
    /// yet part of one.
    pub fn finish(&mut self) -> Option<&[T]> {
        if self.pending == 0 {
            return None;
        }
        self.advance();
        let l = self.spec.frame_len;
        let filled = self.filled;
        for row in self.buf.chunks_mut(l) {
            row[filled..].iter_mut().for_each(|v| *v = T::zero());
        }
        self.filled = l;
        self.pending = 0;
        self.emitted = true;
        Some(&self.buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, random_tensor};
    use proptest::prelude::*;

    fn spec(l: usize, hop: usize) -> FrameSpec {
        FrameSpec::new(l, hop, 8000).unwrap()
    }

    #[test]
    fn frame_count_formula() {
        assert_eq!(frame_signal(&[0.0f32; 32], &FrameSpec::default()).unwrap().shape(), &[3, 16]);
        let ramp: Vec<f64> = (0..10).map(f64::from).collect();
        let f = frame_signal(&ramp, &spec(4, 2)).unwrap();
        assert_eq!(f.shape(), &[4, 4]);
        assert_eq!(&f.data()[..8], &[0.0, 1.0, 2.0, 3.0, 2.0, 3.0, 4.0, 5.0]);
        let one = frame_signal(&ramp[..4], &spec(4, 2)).unwrap();
        assert_eq!(one.data(), &ramp[..4]);
    }

    #[test]
    fn short_and_empty_inputs() {
        let f = frame_signal(&[1.0f64, 2.0], &spec(4, 2)).unwrap();
        assert_eq!(f.data(), &[1.0, 2.0, 0.0, 0.0]);
        assert!(matches!(frame_signal::<f64>(&[], &spec(4, 2)), Err(Error::EmptyInput(_))));
        assert!(FrameSpec::new(4, 5, 8000).is_err());
    }

    #[test]
    fn ones_reconstruct_to_ones() {
        let frames = Tensor::<f64>::constant(&[1, 5, 4], 1.0).unwrap();
        let y = overlap_add(&frames, &spec(4, 2)).unwrap();
        assert_eq!(y[0].len(), 12);
        assert!(y[0].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn matches_sample_accumulator() {
        let s = spec(6, 4);
        let frames = random_tensor(&[2, 7, 6], 3);
        let y = overlap_add(&frames, &s).unwrap();
        for ch in 0..2 {
            let mut sum = [0.0f64; 30];
            let mut cnt = [0usize; 30];
            for k in 0..7 {
                for i in 0..6 {
                    sum[k * 4 + i] += frames.data()[(ch * 7 + k) * 6 + i];
                    cnt[k * 4 + i] += 1;
                }
            }
            for n in 0..30 {
                assert!((y[ch][n] - sum[n] / cnt[n] as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn streaming_is_bit_identical() {
        let s = FrameSpec::default();
        let frames = random_tensor(&[2, 100, 16], 9).cast::<f32>();
        let offline = overlap_add(&frames, &s).unwrap();
        let mut ola = StreamingOverlapAdd::new(s, 2).unwrap();
        let mut streamed = vec![Vec::new(); 2];
        let mut out = [0.0f32; 16];
        let mut frame = [0.0f32; 32];
        for k in 0..100 {
            for ch in 0..2 {
                frame[ch * 16..(ch + 1) * 16].copy_from_slice(&frames.data()[(ch * 100 + k) * 16..(ch * 100 + k + 1) * 16]);
            }
            ola.push(&frame, &mut out).unwrap();
            for ch in 0..2 {
                streamed[ch].extend_from_slice(&out[ch * 8..(ch + 1) * 8]);
            }
        }
        for (ch, tail) in ola.flush().into_iter().enumerate() {
            streamed[ch].extend(tail);
        }
        assert_eq!(streamed, offline);
    }

    #[test]
    fn first_emission_after_one_frame() {
        let s = FrameSpec::default();
        let mut ola = StreamingOverlapAdd::<f32>::new(s, 1).unwrap();
        assert_eq!(ola.flush(), vec![Vec::<f32>::new()]);
        let mut out = [0.0f32; 8];
        ola.push(&[1.0; 16], &mut out).unwrap();
        assert_eq!(out, [1.0; 8]);
        assert_eq!(ola.frames_seen() * s.hop + (s.frame_len - s.hop), s.frame_len);
    }

    #[test]
    fn overlap_add_gradcheck() {
        let s = spec(4, 2);
        check_gradients(&[random_tensor(&[2, 5, 4], 1)], |t, v| overlap_add_op(t, v[0], &s));
    }

    proptest! {
        #[test]
        fn round_trip(x in proptest::collection::vec(-1.0f64..1.0, 16..300), hop in 1usize..=16) {
            // exact while every sample is covered at most twice
            let s = spec(16, hop);
            let frames = frame_signal(&x, &s).unwrap();
            let k = frames.shape()[0];
            let y = overlap_add(&frames.reshape(&[1, k, 16]).unwrap(), &s).unwrap();
            let n = s.output_len(k);
            if hop >= 8 {
                prop_assert_eq!(&y[0][..], &x[..n]);
            }
            for (a, b) in y[0].iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn round_trip_f32(x in proptest::collection::vec(-1.0f32..1.0, 16..300)) {
            let s = FrameSpec::default();
            let frames = frame_signal(&x, &s).unwrap();
            let k = frames.shape()[0];
            let y = overlap_add(&frames.reshape(&[1, k, 16]).unwrap(), &s).unwrap();
            for (a, b) in y[0].iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn emissions_are_causal(k in 1usize..30, t in 0usize..30, hop in 1usize..=16) {
            // samples emitted at step t only depend on frames <= t
            let s = spec(16, hop);
            let t = t % k;
            let base = random_tensor(&[1, k, 16], 5);
            let mut bumped = base.clone();
            for v in &mut bumped.data_mut()[(t * 16)..] {
                *v += 1.0;
            }
            let (a, b) = (overlap_add(&base, &s).unwrap(), overlap_add(&bumped, &s).unwrap());
            prop_assert_eq!(&a[0][..t * hop], &b[0][..t * hop]);
        }
    }

    #[test]
    fn live_framing_matches_offline() {
        for (l, hop, len) in [(16, 8, 100), (16, 8, 104), (16, 8, 5), (12, 5, 47), (4, 4, 9)] {
            let spec = FrameSpec::new(l, hop, 8000).unwrap();
            let x: Vec<Vec<f64>> = (0..2).map(|c| (0..len).map(|i| (i * 3 + c) as f64).collect()).collect();
            let offline = frame_channels(&x, &spec).unwrap();
            let k = offline.shape()[1];
            let mut framer = StreamingFramer::new(spec, 2).unwrap();
            let mut frames = Vec::new();
            for t in 0..len {
                if let Some(f) = framer.push(&[x[0][t], x[1][t]]).unwrap() {
                    frames.push(f.to_vec());
                }
            }
            if let Some(f) = framer.finish() {
                frames.push(f.to_vec());
            }
            assert!(framer.finish().is_none());
            assert_eq!(frames.len(), k, "{l} {hop} {len}");
            for (t, f) in frames.iter().enumerate() {
                for ch in 0..2 {
                    let want = &offline.data()[(ch * k + t) * l..(ch * k + t + 1) * l];
                    assert_eq!(&f[ch * l..(ch + 1) * l], want);
                }
            }
        }
    }
}
