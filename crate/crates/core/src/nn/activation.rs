use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::autograd::{add_into, Backward, Tape, Var};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// One trainable slope per channel (leading axis).
    Prelu,
    Sigmoid,
}

/// Parametric ReLU with one slope per leading-axis channel.
pub fn prelu<T: Scalar>(tape: &mut Tape<T>, x: Var, slope: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if tape.shape(slope) != [shape[0]] {
        return Err(shape_err("prelu", &[shape[0]], tape.shape(slope)));
    }
    let inner = tape.value(x).len() / shape[0];
    let a = tape.value(slope).data();
    let out = tape
        .value(x)
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if v >= T::zero() { v } else { a[i / inner] * v })
        .collect();
    Ok(tape.push("prelu", Tensor::raw(shape, out), &[x, slope], Box::new(PreluRule { inner })))
}

/// Scalar PReLU, shared with the streaming path.
#[inline]
pub fn prelu_value<T: Scalar>(v: T, a: T) -> T {
    if v >= T::zero() {
        v
    } else {
        a * v
    }
}

struct PreluRule {
    inner: usize,
}

impl<T: Scalar> Backward<T> for PreluRule {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (xd, a) = (x[0].data(), x[1].data());
        let (gx, ga) = grads.split_at_mut(1);
        add_into(&mut gx[0], |d| {
            for i in 0..d.len() {
                let s = if xd[i] >= T::zero() { T::one() } else { a[i / self.inner] };
                d[i] = d[i] + g[i] * s;
            }
        });
        add_into(&mut ga[0], |d| {
            for i in 0..xd.len() {
                if xd[i] < T::zero() {
                    let c = i / self.inner;
                    d[c] = d[c] + g[i] * xd[i];
                }
            }
        });
    }
}
