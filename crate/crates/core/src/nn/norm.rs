use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{add_into, Backward, Tape, Var};
use crate::error::{shape_err, Result};
use crate::kernels::{normalize_part, CumulativeStats};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Statistics over all frames up to and including the current one.
    Cumulative,
    /// Statistics of the current frame only.
    Framewise,
}

/// Per-stream accumulator of a cumulative layer norm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormState {
    pub stats: CumulativeStats,
}

impl NormState {
    pub fn count(&self) -> f64 {
        self.stats.count
    }

    pub fn reset(&mut self) {
        self.stats = CumulativeStats::default();
    }

    /// Normalizes one frame given as `channels × features` (channel-major)
    /// and folds it into the running statistics.
    pub fn normalize_frame<T: Scalar>(&mut self, frame: &[T], features: usize, gamma: &[T], beta: &[T], out: &mut [T]) {
        let (mean, rstd) = self.stats.update(frame.chunks(features), NORM_EPS);
        for (x, o) in frame.chunks(features).zip(out.chunks_mut(features)) {
            normalize_part(x, mean, rstd, gamma, beta, o);
        }
    }
}

/// Cumulative layer norm over a whole `[C, K, F]` sequence from a fresh state.
pub fn cln<T: Scalar>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let mut state = NormState::default();
    cln_streaming(tape, x, gamma, beta, &mut state)
}

/// Cumulative layer norm continuing from `state`, which is advanced past the
/// frames of `x`. Chunked calls give the same values as one whole call.
pub fn cln_streaming<T: Scalar>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var, state: &mut NormState) -> Result<Var> {
    norm_op(tape, x, gamma, beta, Some(state))
}

/// Normalizes every frame by its own channel × feature statistics.
pub fn framewise_ln<T: Scalar>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    norm_op(tape, x, gamma, beta, None)
}

pub fn layer_norm<T: Scalar>(tape: &mut Tape<T>, kind: NormKind, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    match kind {
        NormKind::Cumulative => cln(tape, x, gamma, beta),
        NormKind::Framewise => framewise_ln(tape, x, gamma, beta),
    }
}

fn norm_op<T: Scalar>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var, state: Option<&mut NormState>) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 3 {
        return Err(shape_err("layer_norm", &[0, 0, 0], &xs));
    }
    let (c, k, f) = (xs[0], xs[1], xs[2]);
    for p in [gamma, beta] {
        if tape.shape(p) != [f] {
            return Err(shape_err("layer_norm affine", &[f], tape.shape(p)));
        }
    }
    let xd = tape.value(x).data();
    let (gd, bd) = (tape.value(gamma).data(), tape.value(beta).data());
    let mut out = vec![T::zero(); xd.len()];
    let mut means = Vec::with_capacity(k);
    let mut rstds = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    let cumulative = state.is_some();
    let mut local = CumulativeStats::default();
    let stats = match state {
        Some(s) => &mut s.stats,
        None => &mut local,
    };
    let part = |ch: usize, t: usize| (ch * k + t) * f..(ch * k + t + 1) * f;
    for t in 0..k {
        if !cumulative {
            *stats = CumulativeStats::default();
        }
        let (mean, rstd) = stats.update((0..c).map(|ch| &xd[part(ch, t)]), NORM_EPS);
        for ch in 0..c {
            normalize_part(&xd[part(ch, t)], mean, rstd, gd, bd, &mut out[part(ch, t)]);
        }
        means.push(mean);
        rstds.push(rstd);
        counts.push(stats.count);
    }
    let rule = NormRule {
        c,
        k,
        f,
        cumulative,
        means,
        rstds,
        counts,
    };
    let op = if cumulative { "cln" } else { "framewise_ln" };
    Ok(tape.push(op, Tensor::raw(xs, out), &[x, gamma, beta], Box::new(rule)))
}

struct NormRule {
    c: usize,
    k: usize,
    f: usize,
    cumulative: bool,
    means: Vec<f64>,
    rstds: Vec<f64>,
    counts: Vec<f64>,
}

impl<T: Scalar> Backward<T> for NormRule {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (c, k, f) = (self.c, self.k, self.f);
        let (xd, gam) = (x[0].data(), x[1].data());
        let (gx, rest) = grads.split_at_mut(1);
        let (gg, gb) = rest.split_at_mut(1);
        let idx = |ch: usize, t: usize, j: usize| (ch * k + t) * f + j;

        // Per frame: adjoints of the running sum S_t and square sum Q_t.
        let mut g_sum = vec![0.0f64; k];
        let mut g_sq = vec![0.0f64; k];
        for t in 0..k {
            let (mean, rstd, n) = (self.means[t], self.rstds[t], self.counts[t]);
            let (mut a, mut b) = (0.0f64, 0.0f64);
            for ch in 0..c {
                for j in 0..f {
                    let i = idx(ch, t, j);
                    let gh = (g[i] * gam[j]).as_f64();
                    a += gh;
                    b += gh * (xd[i].as_f64() - mean);
                }
            }
            let d_var = -0.5 * b * rstd * rstd * rstd;
            let d_mean = -rstd * a + d_var * (-2.0 * mean);
            g_sum[t] = d_mean / n;
            g_sq[t] = d_var / n;
        }
        if self.cumulative {
            for t in (0..k.saturating_sub(1)).rev() {
                g_sum[t] += g_sum[t + 1];
                g_sq[t] += g_sq[t + 1];
            }
        }
        add_into(&mut gx[0], |d| {
            for t in 0..k {
                let rstd = self.rstds[t];
                for ch in 0..c {
                    for j in 0..f {
                        let i = idx(ch, t, j);
                        let xv = xd[i].as_f64();
                        let v = (g[i] * gam[j]).as_f64() * rstd + g_sum[t] + 2.0 * xv * g_sq[t];
                        d[i] = d[i] + T::of(v);
                    }
                }
            }
        });
        add_into(&mut gg[0], |d| {
            for t in 0..k {
                let (m, r) = (self.means[t], self.rstds[t]);
                for ch in 0..c {
                    for j in 0..f {
                        let i = idx(ch, t, j);
                        d[j] = d[j] + g[i] * T::of((xd[i].as_f64() - m) * r);
                    }
                }
            }
        });
        add_into(&mut gb[0], |d| {
            for (i, &gv) in g.iter().enumerate() {
                d[i % f] = d[i % f] + gv;
            }
        });
    }
}

/// Brute-force moments of a slice, for oracles.
#[cfg(test)]
pub(crate) fn direct_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}
