use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{add_into, Backward, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::kernels::{conv_frame, conv_transpose_frame, ConvGeom, Padding};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Kernel width of the feature-axis resamplers.
pub const RESAMPLE_KERNEL: usize = 4;

/// Convolution over `[channel, time, feature]` tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(k_t, k_f)`.
    pub kernel: (usize, usize),
    /// `(s_t, s_f)`; only `s_t = 1` is causal-frame aligned and supported.
    pub stride: (usize, usize),
    pub depthwise: bool,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: (1, 1),
            depthwise: false,
        }
    }

    pub fn depthwise(channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            depthwise: true,
            ..Self::new(channels, channels, kernel)
        }
    }

    pub fn groups(&self) -> usize {
        if self.depthwise {
            self.in_channels
        } else {
            1
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        let ipg = self.in_channels / self.groups();
        [self.out_channels, ipg, self.kernel.0, self.kernel.1]
    }

    pub fn validate(&self) -> Result<()> {
        let (kt, kf) = self.kernel;
        if kt == 0 || kf == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("convolution extents must be positive".into()));
        }
        if self.depthwise && self.in_channels != self.out_channels {
            return Err(Error::InvalidConfig("depthwise convolution must keep the channel count".into()));
        }
        if self.stride.0 != 1 || self.stride.1 == 0 {
            return Err(Error::InvalidConfig("time stride must be 1".into()));
        }
        Ok(())
    }
}

/// Geometry for `spec` applied to `f_in` features. With unit feature stride
/// the feature axis is zero-padded symmetrically to keep its extent.
pub fn conv_geom(spec: &ConvSpec, f_in: usize) -> Result<ConvGeom> {
    spec.validate()?;
    let (kt, kf) = spec.kernel;
    let pad_f = (kf - 1) / 2;
    let s = spec.stride.1;
    if f_in + 2 * pad_f < kf {
        return Err(shape_err("conv", &[kf], &[f_in]));
    }
    Ok(ConvGeom {
        c_in: spec.in_channels,
        c_out: spec.out_channels,
        groups: spec.groups(),
        k_t: kt,
        k_f: kf,
        stride_f: s,
        pad_f,
        padding: Padding::Zero,
        f_in,
        f_out: (f_in + 2 * pad_f - kf) / s + 1,
    })
}

/// Geometry of the feature downsampler for `f_in` features.
pub fn resample_geom(channels: usize, f_in: usize) -> ConvGeom {
    ConvGeom {
        c_in: channels,
        c_out: channels,
        groups: channels,
        k_t: 1,
        k_f: RESAMPLE_KERNEL,
        stride_f: 2,
        pad_f: 1,
        padding: Padding::Replicate,
        f_in,
        f_out: f_in / 2,
    }
}

/// Time-causal 2D convolution: output frame `t` sees input frames
/// `t - k_t + 1 ..= t`, with zero frames before the start.
pub fn conv2d_causal<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Option<Var>, spec: &ConvSpec) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 3 || xs[0] != spec.in_channels {
        return Err(shape_err("conv2d_causal", &[spec.in_channels, 0, 0], &xs));
    }
    let geom = conv_geom(spec, xs[2])?;
    conv_op(tape, "conv2d_causal", x, w, b, geom)
}

/// Depthwise causal convolution: channel `c` of the output only reads channel
/// `c` of the input. `w` is `[C, 1, k_t, k_f]`.
pub fn depthwise_conv_causal<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    kernel: (usize, usize),
) -> Result<Var> {
    let c = tape.shape(x)[0];
    let spec = ConvSpec::depthwise(c, kernel);
    let ws = tape.shape(w);
    if ws[0] != c {
        return Err(shape_err("depthwise_conv_causal", &spec.weight_shape(), ws));
    }
    conv2d_causal(tape, x, w, b, &spec)
}

/// Halves the feature axis with a trainable depthwise `1 × 4`, stride-2
/// convolution (edges replicated). Purely per frame.
pub fn feature_downsample<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 3 || xs[2] % 2 != 0 || xs[2] < 2 {
        return Err(shape_err("feature_downsample", &[xs[0], 0, 2 * (xs[2] / 2).max(1)], &xs));
    }
    conv_op(tape, "feature_downsample", x, w, b, resample_geom(xs[0], xs[2]))
}

fn conv_op<T: Scalar>(tape: &mut Tape<T>, op: &'static str, x: Var, w: Var, b: Option<Var>, g: ConvGeom) -> Result<Var> {
    let expected_w = [g.c_out, g.in_per_group(), g.k_t, g.k_f];
    if tape.value(w).len() != g.weight_len() {
        return Err(shape_err(op, &expected_w, tape.shape(w)));
    }
    if let Some(b) = b {
        if tape.value(b).len() != g.c_out {
            return Err(shape_err(op, &[g.c_out], tape.shape(b)));
        }
    }
    let k = tape.shape(x)[1];
    let xd = tape.value(x).data();
    let wd = tape.value(w).data();
    let bd = b.map(|b| tape.value(b).data());
    let mut out = vec![T::zero(); g.c_out * k * g.f_out];
    let mut frame = vec![T::zero(); g.c_out * g.f_out];
    for t in 0..k {
        conv_frame(
            &g,
            wd,
            bd,
            |ci, dt| {
                let tt = t + dt;
                (tt + 1 >= g.k_t).then(|| {
                    let src = tt + 1 - g.k_t;
                    let off = (ci * k + src) * g.f_in;
                    &xd[off..off + g.f_in]
                })
            },
            &mut frame,
        );
        for co in 0..g.c_out {
            let dst = (co * k + t) * g.f_out;
            out[dst..dst + g.f_out].copy_from_slice(&frame[co * g.f_out..(co + 1) * g.f_out]);
        }
    }
    let mut inputs = vec![x, w];
    inputs.extend(b);
    let value = Tensor::raw(vec![g.c_out, k, g.f_out], out);
    Ok(tape.push(op, value, &inputs, Box::new(ConvRule { g, k })))
}

struct ConvRule {
    g: ConvGeom,
    k: usize,
}

impl<T: Scalar> Backward<T> for ConvRule {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, gout: &[T], grads: &mut [Option<Vec<T>>]) {
        let (g, k) = (&self.g, self.k);
        let (xd, wd) = (x[0].data(), x[1].data());
        let (gx, rest) = grads.split_at_mut(1);
        let (gw, gb) = rest.split_at_mut(1);
        let (ipg, opg) = (g.in_per_group(), g.out_per_group());
        for co in 0..g.c_out {
            let group = co / opg;
            for t in 0..k {
                let go = &gout[(co * k + t) * g.f_out..(co * k + t + 1) * g.f_out];
                if let Some(gb) = gb.first_mut() {
                    add_into(gb, |d| d[co] = go.iter().fold(d[co], |a, &v| a + v));
                }
                for cl in 0..ipg {
                    let ci = group * ipg + cl;
                    for dt in 0..g.k_t {
                        let tt = t + dt;
                        if tt + 1 < g.k_t {
                            continue;
                        }
                        let src = tt + 1 - g.k_t;
                        let off = (ci * k + src) * g.f_in;
                        let xr = &xd[off..off + g.f_in];
                        for df in 0..g.k_f {
                            let wi = g.w_index(co, cl, dt, df);
                            let wv = wd[wi];
                            let mut acc = T::zero();
                            for (fo, &gv) in go.iter().enumerate() {
                                if let Some(fi) = g.source(fo, df) {
                                    acc = acc + gv * xr[fi];
                                }
                            }
                            add_into(&mut gw[0], |d| d[wi] = d[wi] + acc);
                            add_into(&mut gx[0], |d| {
                                let row = &mut d[off..off + g.f_in];
                                for (fo, &gv) in go.iter().enumerate() {
                                    if let Some(fi) = g.source(fo, df) {
                                        row[fi] = row[fi] + wv * gv;
                                    }
                                }
                            });
                        }
                    }
                }
            }
        }
    }
}

/// Doubles the feature axis with a trainable depthwise transposed `1 × 4`,
/// stride-2 convolution. Purely per frame.
pub fn feature_upsample<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 3 {
        return Err(shape_err("feature_upsample", &[0, 0, 0], &xs));
    }
    let (c, k, f) = (xs[0], xs[1], xs[2]);
    if tape.value(w).len() != c * RESAMPLE_KERNEL {
        return Err(shape_err("feature_upsample", &[c, 1, 1, RESAMPLE_KERNEL], tape.shape(w)));
    }
    if let Some(b) = b {
        if tape.value(b).len() != c {
            return Err(shape_err("feature_upsample", &[c], tape.shape(b)));
        }
    }
    let xd = tape.value(x).data();
    let wd = tape.value(w).data();
    let bd = b.map(|b| tape.value(b).data());
    let f2 = 2 * f;
    let mut out = vec![T::zero(); c * k * f2];
    let mut xin = vec![T::zero(); c * f];
    let mut frame = vec![T::zero(); c * f2];
    for t in 0..k {
        for ch in 0..c {
            xin[ch * f..(ch + 1) * f].copy_from_slice(&xd[(ch * k + t) * f..(ch * k + t + 1) * f]);
        }
        conv_transpose_frame(c, RESAMPLE_KERNEL, 2, 1, f, wd, bd, &xin, &mut frame);
        for ch in 0..c {
            out[(ch * k + t) * f2..(ch * k + t + 1) * f2].copy_from_slice(&frame[ch * f2..(ch + 1) * f2]);
        }
    }
    let mut inputs = vec![x, w];
    inputs.extend(b);
    let value = Tensor::raw(vec![c, k, f2], out);
    Ok(tape.push("feature_upsample", value, &inputs, Box::new(UpsampleRule { c, k, f })))
}

struct UpsampleRule {
    c: usize,
    k: usize,
    f: usize,
}

impl<T: Scalar> Backward<T> for UpsampleRule {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, gout: &[T], grads: &mut [Option<Vec<T>>]) {
        let (c, k, f) = (self.c, self.k, self.f);
        let f2 = 2 * f;
        let (xd, wd) = (x[0].data(), x[1].data());
        let (gx, rest) = grads.split_at_mut(1);
        let (gw, gb) = rest.split_at_mut(1);
        for ch in 0..c {
            for t in 0..k {
                let go = &gout[(ch * k + t) * f2..(ch * k + t + 1) * f2];
                let row = (ch * k + t) * f;
                if let Some(gb) = gb.first_mut() {
                    add_into(gb, |d| d[ch] = go.iter().fold(d[ch], |a, &v| a + v));
                }
                for fi in 0..f {
                    for df in 0..RESAMPLE_KERNEL {
                        let j = (2 * fi + df) as isize - 1;
                        if j < 0 || j as usize >= f2 {
                            continue;
                        }
                        let gv = go[j as usize];
                        let wi = ch * RESAMPLE_KERNEL + df;
                        add_into(&mut gw[0], |d| d[wi] = d[wi] + gv * xd[row + fi]);
                        add_into(&mut gx[0], |d| d[row + fi] = d[row + fi] + gv * wd[wi]);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, random_tensor};

    /// Direct quadruple loop with explicit zero padding.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], kt: usize, kf: usize) -> Vec<f64> {
        let (cin, k, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let cout = w.shape()[0];
        let pf = (kf - 1) / 2;
        let at = |c: usize, t: isize, j: isize| -> f64 {
            if t < 0 || j < 0 || j >= f as isize {
                0.0
            } else {
                x.data()[(c * k + t as usize) * f + j as usize]
            }
        };
        let mut out = vec![0.0; cout * k * f];
        for co in 0..cout {
            for t in 0..k {
                for j in 0..f {
                    let mut s = b[co];
                    for ci in 0..cin {
                        for dt in 0..kt {
                            for df in 0..kf {
                                let wv = w.data()[((co * cin + ci) * kt + dt) * kf + df];
                                s += wv * at(ci, t as isize - (kt - 1 - dt) as isize, j as isize + df as isize - pf as isize);
                            }
                        }
                    }
                    out[(co * k + t) * f + j] = s;
                }
            }
        }
        out
    }

    fn run_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, spec: &ConvSpec) -> Tensor<f64> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let wv = tape.constant(w.clone());
        let bv = b.map(|b| tape.constant(b.clone()));
        let y = conv2d_causal(&mut tape, xv, wv, bv, spec).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn matches_naive_correlation() {
        let x = random_tensor(&[2, 4, 4], 1);
        let w = random_tensor(&[2, 2, 3, 3], 2);
        let b = random_tensor(&[2], 3);
        let y = run_conv(&x, &w, Some(&b), &ConvSpec::new(2, 2, (3, 3)));
        let reference = naive_conv(&x, &w, b.data(), 3, 3);
        for (a, r) in y.data().iter().zip(&reference) {
            assert!((a - r).abs() < 1e-12);
        }
    }

    #[test]
    fn time_impulse_is_causal() {
        let mut x = Tensor::<f64>::zeros(&[1, 8, 5]).unwrap();
        x.data_mut()[(3 * 5)..(4 * 5)].iter_mut().for_each(|v| *v = 1.0);
        let w = Tensor::constant(&[1, 1, 3, 3], 1.0).unwrap();
        let y = run_conv(&x, &w, None, &ConvSpec::new(1, 1, (3, 3)));
        for t in 0..8 {
            let frame = &y.data()[t * 5..(t + 1) * 5];
            let nonzero = frame.iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, (3..=5).contains(&t), "frame {t}");
        }
    }

    #[test]
    fn unit_kernel_identity() {
        let x = random_tensor(&[2, 3, 4], 5);
        let w = Tensor::from_vec(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(run_conv(&x, &w, None, &ConvSpec::new(2, 2, (1, 1))), x);
    }

    #[test]
    fn depthwise_isolates_channels_and_equals_block_diagonal() {
        let x = random_tensor(&[2, 5, 6], 7);
        let mut w = random_tensor(&[2, 1, 3, 3], 8);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let wv = tape.constant(w.clone());
        let y = depthwise_conv_causal(&mut tape, xv, wv, None, (3, 3)).unwrap();
        let dw = tape.value(y).clone();

        let mut full = Tensor::<f64>::zeros(&[2, 2, 3, 3]).unwrap();
        for c in 0..2 {
            full.data_mut()[(c * 2 + c) * 9..(c * 2 + c + 1) * 9].copy_from_slice(&w.data()[c * 9..(c + 1) * 9]);
        }
        let reference = run_conv(&x, &full, None, &ConvSpec::new(2, 2, (3, 3)));
        for (a, r) in dw.data().iter().zip(reference.data()) {
            assert!((a - r).abs() < 1e-12);
        }

        w.data_mut()[9..].iter_mut().for_each(|v| *v = 0.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let wv = tape.constant(w);
        let y = depthwise_conv_causal(&mut tape, xv, wv, None, (3, 3)).unwrap();
        let out = tape.value(y).data();
        assert_eq!(&out[..30], &dw.data()[..30]);
        assert!(out[30..].iter().all(|&v| v == 0.0));

        let bad = tape.constant(random_tensor(&[3, 1, 3, 3], 1));
        assert!(depthwise_conv_causal(&mut tape, xv, bad, None, (3, 3)).is_err());
    }

    #[test]
    fn resampling_shapes_and_constant_preservation() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::constant(&[2, 3, 256], 0.7).unwrap());
        let avg = tape.constant(Tensor::constant(&[2, 1, 1, 4], 0.25).unwrap());
        let d = feature_downsample(&mut tape, x, avg, None).unwrap();
        assert_eq!(tape.shape(d), &[2, 3, 128]);
        assert!(tape.value(d).data().iter().all(|&v| (v - 0.7).abs() < 1e-12));

        let small = tape.constant(random_tensor(&[2, 3, 8], 3));
        let u = feature_upsample(&mut tape, small, avg, None).unwrap();
        assert_eq!(tape.shape(u), &[2, 3, 16]);
        let back = feature_downsample(&mut tape, u, avg, None).unwrap();
        assert_eq!(tape.shape(back), &[2, 3, 8]);

        let odd = tape.constant(random_tensor(&[1, 2, 5], 3));
        let w1 = tape.constant(Tensor::constant(&[1, 1, 1, 4], 0.25).unwrap());
        assert!(feature_downsample(&mut tape, odd, w1, None).is_err());
    }

    #[test]
    fn resampling_is_per_frame() {
        let x = random_tensor(&[2, 4, 8], 21);
        let w = random_tensor(&[2, 1, 1, 4], 22);
        let mut x2 = x.clone();
        x2.data_mut()[2 * 8 + 3] += 1.0; // channel 0, frame 2
        for up in [false, true] {
            let run = |x: &Tensor<f64>| {
                let mut tape = Tape::new();
                let xv = tape.constant(x.clone());
                let wv = tape.constant(w.clone());
                let y = if up {
                    feature_upsample(&mut tape, xv, wv, None).unwrap()
                } else {
                    feature_downsample(&mut tape, xv, wv, None).unwrap()
                };
                tape.value(y).clone()
            };
            let (a, b) = (run(&x), run(&x2));
            let f = a.shape()[2];
            for t in 0..4 {
                let same = a.data()[t * f..(t + 1) * f] == b.data()[t * f..(t + 1) * f];
                assert_eq!(same, t != 2);
            }
        }
    }

    #[test]
    fn gradchecks() {
        let x = random_tensor(&[2, 4, 4], 31);
        check_gradients(
            &[x.clone(), random_tensor(&[3, 2, 3, 3], 32), random_tensor(&[3], 33)],
            |t, v| conv2d_causal(t, v[0], v[1], Some(v[2]), &ConvSpec::new(2, 3, (3, 3))),
        );
        check_gradients(&[x.clone(), random_tensor(&[2, 1, 3, 3], 34)], |t, v| {
            depthwise_conv_causal(t, v[0], v[1], None, (3, 3))
        });
        check_gradients(
            &[x.clone(), random_tensor(&[2, 1, 1, 4], 35), random_tensor(&[2], 36)],
            |t, v| feature_downsample(t, v[0], v[1], Some(v[2])),
        );
        check_gradients(
            &[x, random_tensor(&[2, 1, 1, 4], 37), random_tensor(&[2], 38)],
            |t, v| feature_upsample(t, v[0], v[1], Some(v[2])),
        );
    }
}
