//! Slice-level kernels shared by the tape ops and the streaming engine.
//!
//! Offline (whole-sequence) ops loop these kernels over frames and the
//! streaming path calls them once per frame, so both routes perform the same
//! floating-point operations in the same order.

use crate::scalar::Scalar;

#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// Dot product with eight independent partial sums.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s = s + x * y;
    }
    s
}

/// `out += x · W` with `W` stored row-major as `[x.len(), out.len()]`.
#[inline]
pub fn vec_mat_acc<T: Scalar>(x: &[T], w: &[T], out: &mut [T]) {
    let n = out.len();
    debug_assert_eq!(w.len(), x.len() * n);
    for (p, &xp) in x.iter().enumerate() {
        if xp != T::zero() {
            axpy(out, xp, &w[p * n..(p + 1) * n]);
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Feature-axis padding used outside the valid range of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    /// Edge values are repeated.
    Replicate,
}

/// Geometry of a time-causal 2D convolution over `[channel, time, feature]`.
///
/// Weights are laid out `[c_out, c_in / groups, k_t, k_f]`. The time axis is
/// padded with `k_t - 1` zero frames on the left only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub groups: usize,
    pub k_t: usize,
    pub k_f: usize,
    pub stride_f: usize,
    pub pad_f: usize,
    pub padding: Padding,
    pub f_in: usize,
    pub f_out: usize,
}

impl ConvGeom {
    pub fn in_per_group(&self) -> usize {
        self.c_in / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.c_out / self.groups
    }

    pub fn weight_len(&self) -> usize {
        self.c_out * self.in_per_group() * self.k_t * self.k_f
    }

    #[inline]
    pub fn w_index(&self, co: usize, ci_local: usize, dt: usize, df: usize) -> usize {
        ((co * self.in_per_group() + ci_local) * self.k_t + dt) * self.k_f + df
    }

    /// Input feature index read by output position `fo` at kernel tap `df`,
    /// or `None` if it falls in zero padding.
    #[inline]
    pub fn source(&self, fo: usize, df: usize) -> Option<usize> {
        let idx = (fo * self.stride_f + df) as isize - self.pad_f as isize;
        if idx >= 0 && (idx as usize) < self.f_in {
            Some(idx as usize)
        } else {
            match self.padding {
                Padding::Zero => None,
                Padding::Replicate => Some(idx.clamp(0, self.f_in as isize - 1) as usize),
            }
        }
    }
}

/// Computes one output frame (`c_out × f_out`).
///
/// `input(ci, dt)` yields channel `ci` of the frame `k_t - 1 - dt` steps in
/// the past (so `dt = k_t - 1` is the current frame), or `None` for the
/// causal zero padding before the start of the sequence.
pub fn conv_frame<'a, T, F>(g: &ConvGeom, w: &[T], bias: Option<&[T]>, input: F, out: &mut [T])
where
    T: Scalar,
    F: Fn(usize, usize) -> Option<&'a [T]>,
{
    debug_assert_eq!(out.len(), g.c_out * g.f_out);
    let ipg = g.in_per_group();
    let opg = g.out_per_group();
    for co in 0..g.c_out {
        let o = &mut out[co * g.f_out..(co + 1) * g.f_out];
        let b = bias.map_or(T::zero(), |b| b[co]);
        o.iter_mut().for_each(|v| *v = b);
        let group = co / opg;
        for cl in 0..ipg {
            let ci = group * ipg + cl;
            for dt in 0..g.k_t {
                let Some(x) = input(ci, dt) else { continue };
                for df in 0..g.k_f {
                    let wv = w[g.w_index(co, cl, dt, df)];
                    accumulate_tap(g, o, x, wv, df);
                }
            }
        }
    }
}

#[inline]
fn accumulate_tap<T: Scalar>(g: &ConvGeom, o: &mut [T], x: &[T], wv: T, df: usize) {
    if g.stride_f == 1 && g.padding == Padding::Zero {
        // o[fo] += w * x[fo + df - pad] over the in-range span
        let shift = df as isize - g.pad_f as isize;
        let lo = (-shift).max(0) as usize;
        let hi = ((g.f_in as isize - shift).min(g.f_out as isize)).max(lo as isize) as usize;
        if hi > lo {
            let xs = (lo as isize + shift) as usize;
            axpy(&mut o[lo..hi], wv, &x[xs..xs + (hi - lo)]);
        }
    } else {
        for (fo, ov) in o.iter_mut().enumerate() {
            if let Some(fi) = g.source(fo, df) {
                *ov = *ov + wv * x[fi];
            }
        }
    }
}

/// Depthwise transposed convolution along features for one frame: the
/// adjoint geometry of a depthwise strided `1 × k_f` convolution with zero
/// padding, mapping `f_in` features to `f_out = f_in * stride`.
///
/// `w` is `[channels, k_f]`, `x` and `out` are `channels × f_in` and
/// `channels × f_out`.
pub fn conv_transpose_frame<T: Scalar>(
    channels: usize,
    k_f: usize,
    stride: usize,
    pad: usize,
    f_in: usize,
    w: &[T],
    bias: Option<&[T]>,
    x: &[T],
    out: &mut [T],
) {
    let f_out = f_in * stride;
    for c in 0..channels {
        let o = &mut out[c * f_out..(c + 1) * f_out];
        let b = bias.map_or(T::zero(), |b| b[c]);
        o.iter_mut().for_each(|v| *v = b);
        let xc = &x[c * f_in..(c + 1) * f_in];
        for (fi, &xv) in xc.iter().enumerate() {
            for df in 0..k_f {
                let j = (fi * stride + df) as isize - pad as isize;
                if j >= 0 && (j as usize) < f_out {
                    o[j as usize] = o[j as usize] + w[c * k_f + df] * xv;
                }
            }
        }
    }
}

/// Running statistics of a cumulative layer norm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CumulativeStats {
    pub sum: f64,
    pub sq_sum: f64,
    pub count: f64,
}

impl CumulativeStats {
    /// Folds one frame in and returns `(mean, 1/sqrt(var + eps))` over all
    /// frames seen so far.
    pub fn update<'a, T: Scalar>(&mut self, parts: impl Iterator<Item = &'a [T]>, eps: f64) -> (f64, f64) {
        for part in parts {
            for &v in part {
                let v = v.as_f64();
                self.sum += v;
                self.sq_sum += v * v;
            }
            self.count += part.len() as f64;
        }
        moments(self.sum, self.sq_sum, self.count, eps)
    }
}

#[inline]
pub fn moments(sum: f64, sq_sum: f64, count: f64, eps: f64) -> (f64, f64) {
    let mean = sum / count;
    let var = (sq_sum / count - mean * mean).max(0.0);
    (mean, 1.0 / num_traits::Float::sqrt(var + eps))
}

/// `out[c][f] = (x[c][f] - mean) * rstd * gamma[f] + beta[f]`.
#[inline]
pub fn normalize_part<T: Scalar>(x: &[T], mean: f64, rstd: f64, gamma: &[T], beta: &[T], out: &mut [T]) {
    let (m, r) = (T::of(mean), T::of(rstd));
    for (((o, &v), &g), &b) in out.iter_mut().zip(x).zip(gamma).zip(beta) {
        *o = (v - m) * r * g + b;
    }
}

/// One LSTM step. `gates` receives the activated `[i, f, g, o]` blocks.
///
/// `xproj` already holds `x · W_ih + b`; `w_hh` is `[H, 4H]`.
pub fn lstm_cell<T: Scalar>(
    xproj: &[T],
    w_hh: &[T],
    h: &[T],
    c: &[T],
    gates: &mut [T],
    h_new: &mut [T],
    c_new: &mut [T],
) {
    let hs = h.len();
    gates.copy_from_slice(xproj);
    vec_mat_acc(h, w_hh, gates);
    let (ifg, o) = gates.split_at_mut(3 * hs);
    let (i_f, g) = ifg.split_at_mut(2 * hs);
    i_f.iter_mut().for_each(|v| *v = sigmoid(*v));
    g.iter_mut().for_each(|v| *v = v.tanh());
    o.iter_mut().for_each(|v| *v = sigmoid(*v));
    for k in 0..hs {
        let cn = i_f[hs + k] * c[k] + i_f[k] * g[k];
        c_new[k] = cn;
        h_new[k] = o[k] * cn.tanh();
    }
}

/// One GRU step with gates `[r, z, n]`:
/// `n = tanh(x_n + r ⊙ (h · W_hn))`, `h' = (1 - z) ⊙ n + z ⊙ h`.
///
/// `hproj` receives `h · W_hh` (needed by the backward pass) and `gates` the
/// activated `[r, z, n]` blocks.
pub fn gru_cell<T: Scalar>(
    xproj: &[T],
    w_hh: &[T],
    h: &[T],
    hproj: &mut [T],
    gates: &mut [T],
    h_new: &mut [T],
) {
    let hs = h.len();
    hproj.iter_mut().for_each(|v| *v = T::zero());
    vec_mat_acc(h, w_hh, hproj);
    for k in 0..2 * hs {
        gates[k] = sigmoid(xproj[k] + hproj[k]);
    }
    for k in 0..hs {
        let n = (xproj[2 * hs + k] + gates[k] * hproj[2 * hs + k]).tanh();
        gates[2 * hs + k] = n;
        let z = gates[hs + k];
        h_new[k] = (T::one() - z) * n + z * h[k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: alloc::vec::Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let b: alloc::vec::Vec<f64> = (0..21).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn vec_mat_small() {
        let mut out = [0.0f64; 2];
        vec_mat_acc(&[1.0, 1.0], &[1.0, 2.0, 3.0, 4.0], &mut out);
        assert_eq!(out, [4.0, 6.0]);
    }

    #[test]
    fn replicate_source_clamps() {
        let g = ConvGeom {
            c_in: 1,
            c_out: 1,
            groups: 1,
            k_t: 1,
            k_f: 4,
            stride_f: 2,
            pad_f: 1,
            padding: Padding::Replicate,
            f_in: 8,
            f_out: 4,
        };
        assert_eq!(g.source(0, 0), Some(0));
        assert_eq!(g.source(3, 3), Some(7));
        assert_eq!(g.source(1, 0), Some(1));
    }
}
