//! LSTM and GRU layers.
//!
//! Weights are stored input-major so a step is a sequence of `axpy` sweeps:
//! `w_ih` is `[input, G·hidden]`, `w_hh` is `[hidden, G·hidden]` and `bias`
//! is `[G·hidden]` (a single bias per gate), with `G = 4` for LSTM
//! (`[i, f, g, o]`) and `G = 3` for GRU (`[r, z, n]`).

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{add_into, vec_mat_outer, Backward, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::kernels::{axpy, dot, gru_cell, lstm_cell, vec_mat_acc};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RnnKind {
    Lstm,
    Gru,
}

impl RnnKind {
    pub fn gates(self) -> usize {
        match self {
            RnnKind::Lstm => 4,
            RnnKind::Gru => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RnnSpec {
    pub kind: RnnKind,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl RnnSpec {
    pub fn new(kind: RnnKind, input_size: usize, hidden_size: usize) -> Self {
        Self {
            kind,
            input_size,
            hidden_size,
        }
    }

    pub fn gate_width(&self) -> usize {
        self.kind.gates() * self.hidden_size
    }

    pub fn param_count(&self) -> usize {
        let (i, h) = (self.input_size, self.hidden_size);
        self.kind.gates() * (h * (i + h) + h)
    }
}

/// Borrowed view of one recurrent layer's weights.
#[derive(Debug, Clone, Copy)]
pub struct RnnWeights<'a, T> {
    pub spec: RnnSpec,
    pub w_ih: &'a [T],
    pub w_hh: &'a [T],
    pub bias: &'a [T],
}

impl<'a, T: Scalar> RnnWeights<'a, T> {
    pub fn new(spec: RnnSpec, w_ih: &'a [T], w_hh: &'a [T], bias: &'a [T]) -> Result<Self> {
        let (i, h, g) = (spec.input_size, spec.hidden_size, spec.gate_width());
        if w_ih.len() != i * g || w_hh.len() != h * g || bias.len() != g {
            return Err(shape_err("rnn weights", &[i * g, h * g, g], &[w_ih.len(), w_hh.len(), bias.len()]));
        }
        Ok(Self { spec, w_ih, w_hh, bias })
    }
}

/// Hidden (and, for LSTM, cell) state of one stream, with step scratch space.
#[derive(Debug, Clone)]
pub struct RnnState<T> {
    kind: RnnKind,
    pub h: Vec<T>,
    pub c: Vec<T>,
    xproj: Vec<T>,
    hproj: Vec<T>,
    gates: Vec<T>,
    h_new: Vec<T>,
    c_new: Vec<T>,
}

impl<T: PartialEq> PartialEq for RnnState<T> {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.h == other.h && self.c == other.c
    }
}

impl<T: Scalar> RnnState<T> {
    pub fn new(spec: &RnnSpec) -> Self {
        let (h, g) = (spec.hidden_size, spec.gate_width());
        let cells = if spec.kind == RnnKind::Lstm { h } else { 0 };
        Self {
            kind: spec.kind,
            h: vec![T::zero(); h],
            c: vec![T::zero(); cells],
            xproj: vec![T::zero(); g],
            hproj: vec![T::zero(); g],
            gates: vec![T::zero(); g],
            h_new: vec![T::zero(); h],
            c_new: vec![T::zero(); cells],
        }
    }

    pub fn reset(&mut self) {
        self.h.iter_mut().for_each(|v| *v = T::zero());
        self.c.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Advances one step and returns the new hidden state (the output).
    pub fn step(&mut self, w: &RnnWeights<'_, T>, x: &[T]) -> Result<&[T]> {
        if w.spec.kind != self.kind || x.len() != w.spec.input_size || self.h.len() != w.spec.hidden_size {
            return Err(shape_err(
                "rnn step",
                &[w.spec.input_size, w.spec.hidden_size],
                &[x.len(), self.h.len()],
            ));
        }
        self.xproj.copy_from_slice(w.bias);
        vec_mat_acc(x, w.w_ih, &mut self.xproj);
        match self.kind {
            RnnKind::Lstm => {
                lstm_cell(&self.xproj, w.w_hh, &self.h, &self.c, &mut self.gates, &mut self.h_new, &mut self.c_new);
                core::mem::swap(&mut self.c, &mut self.c_new);
            }
            RnnKind::Gru => gru_cell(&self.xproj, w.w_hh, &self.h, &mut self.hproj, &mut self.gates, &mut self.h_new),
        }
        core::mem::swap(&mut self.h, &mut self.h_new);
        Ok(&self.h)
    }
}

pub fn lstm_step<'s, T: Scalar>(w: &RnnWeights<'_, T>, x: &[T], state: &'s mut RnnState<T>) -> Result<&'s [T]> {
    if w.spec.kind != RnnKind::Lstm {
        return Err(Error::InvalidConfig("lstm_step needs LSTM weights".into()));
    }
    state.step(w, x)
}

pub fn gru_step<'s, T: Scalar>(w: &RnnWeights<'_, T>, x: &[T], state: &'s mut RnnState<T>) -> Result<&'s [T]> {
    if w.spec.kind != RnnKind::Gru {
        return Err(Error::InvalidConfig("gru_step needs GRU weights".into()));
    }
    state.step(w, x)
}

/// Runs a recurrent layer over `[C, K, input]`, treating each channel as an
/// independent sequence that shares the same weights. States start at zero.
pub fn rnn_sequence<T: Scalar>(tape: &mut Tape<T>, x: Var, w_ih: Var, w_hh: Var, bias: Var, kind: RnnKind) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 3 {
        return Err(shape_err("rnn_sequence", &[0, 0, 0], &xs));
    }
    let (c, k, i) = (xs[0], xs[1], xs[2]);
    let g = tape.value(bias).len();
    let h = g / kind.gates();
    let spec = RnnSpec::new(kind, i, h);
    let weights = RnnWeights::new(spec, tape.value(w_ih).data(), tape.value(w_hh).data(), tape.value(bias).data())?;

    let xd = tape.value(x).data();
    let mut xproj = vec![T::zero(); c * k * g];
    for row in 0..c * k {
        let dst = &mut xproj[row * g..(row + 1) * g];
        dst.copy_from_slice(weights.bias);
        vec_mat_acc(&xd[row * i..(row + 1) * i], weights.w_ih, dst);
    }

    let mut out = vec![T::zero(); c * k * h];
    let mut gates = vec![T::zero(); c * k * g];
    let mut cells = vec![T::zero(); if kind == RnnKind::Lstm { c * k * h } else { 0 }];
    let mut hproj = vec![T::zero(); if kind == RnnKind::Gru { c * k * g } else { 0 }];
    let zeros = vec![T::zero(); h];
    for ch in 0..c {
        for t in 0..k {
            let row = ch * k + t;
            let (prev_out, cur_out) = out.split_at_mut(row * h);
            let h_prev = if t == 0 { &zeros[..] } else { &prev_out[(row - 1) * h..] };
            let h_new = &mut cur_out[..h];
            let gr = &mut gates[row * g..(row + 1) * g];
            let xp = &xproj[row * g..(row + 1) * g];
            match kind {
                RnnKind::Lstm => {
                    let (prev_c, cur_c) = cells.split_at_mut(row * h);
                    let c_prev = if t == 0 { &zeros[..] } else { &prev_c[(row - 1) * h..] };
                    lstm_cell(xp, weights.w_hh, h_prev, c_prev, gr, h_new, &mut cur_c[..h]);
                }
                RnnKind::Gru => {
                    let hp = &mut hproj[row * g..(row + 1) * g];
                    gru_cell(xp, weights.w_hh, h_prev, hp, gr, h_new);
                }
            }
        }
    }
    let rule = RnnRule {
        kind,
        c,
        k,
        i,
        h,
        gates,
        cells,
        hproj,
    };
    let value = Tensor::raw(vec![c, k, h], out);
    Ok(tape.push("rnn_sequence", value, &[x, w_ih, w_hh, bias], Box::new(rule)))
}

struct RnnRule<T> {
    kind: RnnKind,
    c: usize,
    k: usize,
    i: usize,
    h: usize,
    gates: Vec<T>,
    cells: Vec<T>,
    hproj: Vec<T>,
}

impl<T: Scalar> Backward<T> for RnnRule<T> {
    fn backward(&self, x: &[&Tensor<T>], y: &Tensor<T>, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let (c, k, i, h) = (self.c, self.k, self.i, self.h);
        let g = self.kind.gates() * h;
        let (xd, w_ih, w_hh) = (x[0].data(), x[1].data(), x[2].data());
        let yd = y.data();
        let one = T::one();

        // adjoint of the pre-activation gate inputs, per (channel, frame)
        let mut d_pre = vec![T::zero(); c * k * g];
        let mut g_whh = vec![T::zero(); h * g];
        let mut dh = vec![T::zero(); h];
        let mut dc = vec![T::zero(); h];
        let mut dhp = vec![T::zero(); g];
        let zeros = vec![T::zero(); h];
        for ch in 0..c {
            dh.iter_mut().for_each(|v| *v = T::zero());
            dc.iter_mut().for_each(|v| *v = T::zero());
            for t in (0..k).rev() {
                let row = ch * k + t;
                for j in 0..h {
                    dh[j] = dh[j] + gy[row * h + j];
                }
                let gates = &self.gates[row * g..(row + 1) * g];
                let h_prev = if t == 0 { &zeros[..] } else { &yd[(row - 1) * h..row * h] };
                let da = &mut d_pre[row * g..(row + 1) * g];
                match self.kind {
                    RnnKind::Lstm => {
                        let c_t = &self.cells[row * h..(row + 1) * h];
                        let c_prev = if t == 0 { &zeros[..] } else { &self.cells[(row - 1) * h..row * h] };
                        for j in 0..h {
                            let (ig, fg, gg, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                            let tc = c_t[j].tanh();
                            let d_o = dh[j] * tc;
                            let d_c = dh[j] * og * (one - tc * tc) + dc[j];
                            da[j] = d_c * gg * ig * (one - ig);
                            da[h + j] = d_c * c_prev[j] * fg * (one - fg);
                            da[2 * h + j] = d_c * ig * (one - gg * gg);
                            da[3 * h + j] = d_o * og * (one - og);
                            dc[j] = d_c * fg;
                        }
                        vec_mat_outer(h_prev, da, &mut g_whh);
                        for p in 0..h {
                            dh[p] = dot(&w_hh[p * g..(p + 1) * g], da);
                        }
                    }
                    RnnKind::Gru => {
                        let hp = &self.hproj[row * g..(row + 1) * g];
                        for j in 0..h {
                            let (r, z, n) = (gates[j], gates[h + j], gates[2 * h + j]);
                            let d_n = dh[j] * (one - z);
                            let d_z = dh[j] * (h_prev[j] - n);
                            let d_an = d_n * (one - n * n);
                            let d_r = d_an * hp[2 * h + j];
                            da[j] = d_r * r * (one - r);
                            da[h + j] = d_z * z * (one - z);
                            da[2 * h + j] = d_an;
                            dhp[j] = da[j];
                            dhp[h + j] = da[h + j];
                            dhp[2 * h + j] = d_an * r;
                        }
                        vec_mat_outer(h_prev, &dhp, &mut g_whh);
                        for p in 0..h {
                            dh[p] = dh[p] * gates[h + p] + dot(&w_hh[p * g..(p + 1) * g], &dhp);
                        }
                    }
                }
            }
        }

        let (gx, rest) = grads.split_at_mut(1);
        let (gwi, rest) = rest.split_at_mut(1);
        let (gwh, gb) = rest.split_at_mut(1);
        add_into(&mut gx[0], |d| {
            for row in 0..c * k {
                let da = &d_pre[row * g..(row + 1) * g];
                for p in 0..i {
                    d[row * i + p] = d[row * i + p] + dot(&w_ih[p * g..(p + 1) * g], da);
                }
            }
        });
        add_into(&mut gwi[0], |d| {
            for row in 0..c * k {
                vec_mat_outer(&xd[row * i..(row + 1) * i], &d_pre[row * g..(row + 1) * g], d);
            }
        });
        add_into(&mut gwh[0], |d| axpy(d, one, &g_whh));
        add_into(&mut gb[0], |d| {
            for row in 0..c * k {
                axpy(d, one, &d_pre[row * g..(row + 1) * g]);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, random_tensor};

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Per-gate scalar loops straight from the textbook equations, reading
    /// weights in `[input, gate·hidden]` layout.
    fn scalar_lstm(w_ih: &[f64], w_hh: &[f64], b: &[f64], xs: &[Vec<f64>], hs: usize) -> Vec<Vec<f64>> {
        let ins = xs[0].len();
        let g = 4 * hs;
        let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
        let mut outs = Vec::new();
        for x in xs {
            let pre = |gate: usize, j: usize, h: &[f64]| {
                let col = gate * hs + j;
                let mut s = b[col];
                for p in 0..ins {
                    s += x[p] * w_ih[p * g + col];
                }
                for p in 0..hs {
                    s += h[p] * w_hh[p * g + col];
                }
                s
            };
            let mut hn = vec![0.0; hs];
            let mut cn = vec![0.0; hs];
            for j in 0..hs {
                let ig = sig(pre(0, j, &h));
                let fg = sig(pre(1, j, &h));
                let gg = pre(2, j, &h).tanh();
                let og = sig(pre(3, j, &h));
                cn[j] = fg * c[j] + ig * gg;
                hn[j] = og * cn[j].tanh();
            }
            h = hn;
            c = cn;
            outs.push(h.clone());
        }
        outs
    }

    fn scalar_gru(w_ih: &[f64], w_hh: &[f64], b: &[f64], xs: &[Vec<f64>], hs: usize) -> Vec<Vec<f64>> {
        let ins = xs[0].len();
        let g = 3 * hs;
        let mut h = vec![0.0; hs];
        let mut outs = Vec::new();
        for x in xs {
            let xin = |gate: usize, j: usize| {
                let col = gate * hs + j;
                b[col] + (0..ins).map(|p| x[p] * w_ih[p * g + col]).sum::<f64>()
            };
            let hin = |gate: usize, j: usize, h: &[f64]| (0..hs).map(|p| h[p] * w_hh[p * g + gate * hs + j]).sum::<f64>();
            let mut hn = vec![0.0; hs];
            for j in 0..hs {
                let r = sig(xin(0, j) + hin(0, j, &h));
                let z = sig(xin(1, j) + hin(1, j, &h));
                let n = (xin(2, j) + r * hin(2, j, &h)).tanh();
                hn[j] = (1.0 - z) * n + z * h[j];
            }
            h = hn;
            outs.push(h.clone());
        }
        outs
    }

    fn weights(kind: RnnKind, i: usize, h: usize, seed: u64) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>) {
        let g = kind.gates() * h;
        (random_tensor(&[i, g], seed), random_tensor(&[h, g], seed + 1), random_tensor(&[g], seed + 2))
    }

    #[test]
    fn zero_everything_gives_zero() {
        for kind in [RnnKind::Lstm, RnnKind::Gru] {
            let spec = RnnSpec::new(kind, 3, 4);
            let g = spec.gate_width();
            let (wi, wh, b) = (vec![0.0f64; 3 * g], vec![0.0; 4 * g], vec![0.0; g]);
            let w = RnnWeights::new(spec, &wi, &wh, &b).unwrap();
            let mut st = RnnState::new(&spec);
            let y = st.step(&w, &[0.0; 3]).unwrap().to_vec();
            assert!(y.iter().all(|&v| v == 0.0));
            assert!(st.c.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn steps_match_scalar_oracles() {
        let (i, h) = (3, 5);
        let xs: Vec<Vec<f64>> = (0..3).map(|s| random_tensor(&[i], 90 + s).into_data()).collect();
        for kind in [RnnKind::Lstm, RnnKind::Gru] {
            let (wi, wh, b) = weights(kind, i, h, 70);
            let spec = RnnSpec::new(kind, i, h);
            let w = RnnWeights::new(spec, wi.data(), wh.data(), b.data()).unwrap();
            let expect = match kind {
                RnnKind::Lstm => scalar_lstm(wi.data(), wh.data(), b.data(), &xs, h),
                RnnKind::Gru => scalar_gru(wi.data(), wh.data(), b.data(), &xs, h),
            };
            let mut st = RnnState::new(&spec);
            for (x, e) in xs.iter().zip(&expect) {
                let y = match kind {
                    RnnKind::Lstm => lstm_step(&w, x, &mut st).unwrap(),
                    RnnKind::Gru => gru_step(&w, x, &mut st).unwrap(),
                };
                for (a, b) in y.iter().zip(e) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn interleaved_streams_are_isolated() {
        let spec = RnnSpec::new(RnnKind::Lstm, 2, 3);
        let (wi, wh, b) = weights(RnnKind::Lstm, 2, 3, 5);
        let w = RnnWeights::new(spec, wi.data(), wh.data(), b.data()).unwrap();
        let xa: Vec<Vec<f64>> = (0..4).map(|s| random_tensor(&[2], 200 + s).into_data()).collect();
        let xb: Vec<Vec<f64>> = (0..4).map(|s| random_tensor(&[2], 300 + s).into_data()).collect();
        let solo = |xs: &[Vec<f64>]| {
            let mut st = RnnState::new(&spec);
            xs.iter().map(|x| st.step(&w, x).unwrap().to_vec()).collect::<Vec<_>>()
        };
        let (ya, yb) = (solo(&xa), solo(&xb));
        let (mut sa, mut sb) = (RnnState::new(&spec), RnnState::new(&spec));
        for t in 0..4 {
            assert_eq!(sa.step(&w, &xa[t]).unwrap(), &ya[t][..]);
            assert_eq!(sb.step(&w, &xb[t]).unwrap(), &yb[t][..]);
        }
    }

    #[test]
    fn parameter_counts() {
        let l = RnnSpec::new(RnnKind::Lstm, 16, 16);
        let g = RnnSpec::new(RnnKind::Gru, 16, 16);
        assert_eq!(l.param_count(), 4 * (16 * 32 + 16));
        assert_eq!(g.param_count() * 4, l.param_count() * 3);
    }

    #[test]
    fn sequence_matches_steps() {
        for kind in [RnnKind::Lstm, RnnKind::Gru] {
            let (wi, wh, b) = weights(kind, 4, 3, 11);
            let x = random_tensor(&[2, 5, 4], 12);
            let mut tape = Tape::new();
            let vars = [x.clone(), wi.clone(), wh.clone(), b.clone()].map(|t| tape.constant(t));
            let y = rnn_sequence(&mut tape, vars[0], vars[1], vars[2], vars[3], kind).unwrap();
            let spec = RnnSpec::new(kind, 4, 3);
            let w = RnnWeights::new(spec, wi.data(), wh.data(), b.data()).unwrap();
            for ch in 0..2 {
                let mut st = RnnState::new(&spec);
                for t in 0..5 {
                    let row = ch * 5 + t;
                    let step = st.step(&w, &x.data()[row * 4..row * 4 + 4]).unwrap();
                    assert_eq!(step, &tape.value(y).data()[row * 3..row * 3 + 3]);
                }
            }
        }
    }

    #[test]
    fn gradchecks() {
        for kind in [RnnKind::Lstm, RnnKind::Gru] {
            let (wi, wh, b) = weights(kind, 3, 4, 21);
            let x = random_tensor(&[2, 4, 3], 22);
            check_gradients(&[x, wi, wh, b], |t, v| rnn_sequence(t, v[0], v[1], v[2], v[3], kind));
        }
    }
}
