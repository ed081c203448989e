//! Gradient clipping, Adam and the step-decay learning-rate schedule.

use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Clamps every accumulated gradient element to `[-bound, bound]`.
pub fn clip_gradients<T: Scalar>(params: &mut [Tensor<T>], bound: f64) {
    let (lo, hi) = (T::of(-bound), T::of(bound));
    for p in params {
        if let Some(g) = p.grad_mut() {
            g.iter_mut().for_each(|v| *v = v.max(lo).min(hi));
        }
    }
}

/// `lr0 · decay^floor(epoch / every)`.
pub fn lr_schedule(lr0: f64, decay: f64, every: usize, epoch: usize) -> f64 {
    lr0 * Float::powi(decay, (epoch / every.max(1)) as i32)
}

/// Adam moments for a list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &[Tensor<T>], lr: f64) -> Self {
        Self {
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step on every parameter that requires a
/// gradient. A missing accumulator counts as a zero gradient.
pub fn adam_update<T: Scalar>(params: &mut [Tensor<T>], state: &mut OptimState<T>) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(shape_err("adam_update", &[state.m.len()], &[params.len()]));
    }
    if let Some((p, m)) = params.iter().zip(&state.m).find(|(p, m)| p.len() != m.len()) {
        return Err(shape_err("adam_update", &[m.len()], p.shape()));
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - Float::powi(b1, state.step as i32);
    let c2 = 1.0 - Float::powi(b2, state.step as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if !p.requires_grad() {
            continue;
        }
        let grad = p.grad().map(<[T]>::to_vec);
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            let g = grad.as_ref().map_or(0.0, |g| g[i].as_f64());
            let mi = b1 * m[i].as_f64() + (1.0 - b1) * g;
            let vi = b2 * v[i].as_f64() + (1.0 - b2) * g * g;
            m[i] = T::of(mi);
            v[i] = T::of(vi);
            let update = state.lr * (mi / c1) / (Float::sqrt(vi / c2) + state.eps);
            *w = T::of(w.as_f64() - update);
        }
    }
    Ok(())
}
