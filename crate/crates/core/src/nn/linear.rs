use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::autograd::{add_into, vec_mat_outer, Backward, Tape, Var};
use crate::error::{shape_err, Result};
use crate::kernels::{dot, vec_mat_acc};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Feed-forward layer applied independently at every leading index:
/// `[..., in] × W[in, out] (+ bias[out]) → [..., out]`.
pub fn feed_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    let ws = tape.shape(w).to_vec();
    let d_in = *xs.last().unwrap();
    if ws.len() != 2 || ws[0] != d_in {
        return Err(shape_err("feed_forward", &[d_in, 0], &ws));
    }
    let d_out = ws[1];
    if let Some(b) = bias {
        if tape.shape(b) != [d_out] {
            return Err(shape_err("feed_forward bias", &[d_out], tape.shape(b)));
        }
    }
    let rows = tape.value(x).len() / d_in;
    let xd = tape.value(x).data();
    let wd = tape.value(w).data();
    let bd = bias.map(|b| tape.value(b).data());
    let mut out = Vec::with_capacity(rows * d_out);
    for r in 0..rows {
        let start = out.len();
        match bd {
            Some(b) => out.extend_from_slice(b),
            None => out.resize(start + d_out, T::zero()),
        }
        vec_mat_acc(&xd[r * d_in..(r + 1) * d_in], wd, &mut out[start..]);
    }
    let mut shape = xs;
    *shape.last_mut().unwrap() = d_out;
    let mut inputs = alloc::vec![x, w];
    inputs.extend(bias);
    let rule = FeedForwardRule { rows, d_in, d_out };
    Ok(tape.push("feed_forward", Tensor::raw(shape, out), &inputs, Box::new(rule)))
}

struct FeedForwardRule {
    rows: usize,
    d_in: usize,
    d_out: usize,
}

impl<T: Scalar> Backward<T> for FeedForwardRule {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (n_in, n_out) = (self.d_in, self.d_out);
        let (xd, wd) = (x[0].data(), x[1].data());
        let (gx, rest) = grads.split_at_mut(1);
        let (gw, gb) = rest.split_at_mut(1);
        add_into(&mut gx[0], |d| {
            for r in 0..self.rows {
                let gr = &g[r * n_out..(r + 1) * n_out];
                for p in 0..n_in {
                    d[r * n_in + p] = d[r * n_in + p] + dot(gr, &wd[p * n_out..(p + 1) * n_out]);
                }
            }
        });
        add_into(&mut gw[0], |d| {
            for r in 0..self.rows {
                vec_mat_outer(&xd[r * n_in..(r + 1) * n_in], &g[r * n_out..(r + 1) * n_out], d);
            }
        });
        if let Some(gb) = gb.first_mut() {
            add_into(gb, |d| {
                for r in 0..self.rows {
                    crate::kernels::axpy(d, T::one(), &g[r * n_out..(r + 1) * n_out]);
                }
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, random_tensor};

    #[test]
    fn identity_and_hand_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_vec(&[1, 2], alloc::vec![1.0, 1.0]).unwrap());
        let w = tape.constant(Tensor::from_vec(&[2, 2], alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = feed_forward(&mut tape, x, w, None).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0, 6.0]);
        let eye = tape.constant(Tensor::from_vec(&[2, 2], alloc::vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let z = tape.constant(random_tensor(&[3, 4, 2], 4));
        let y = feed_forward(&mut tape, z, eye, None).unwrap();
        assert_eq!(tape.value(y), tape.value(z));
        assert!(feed_forward(&mut tape, z, w, Some(x)).is_err());
    }

    #[test]
    fn gradcheck_with_and_without_bias() {
        let x = random_tensor(&[2, 3, 4], 1);
        let w = random_tensor(&[4, 5], 2);
        let b = random_tensor(&[5], 3);
        check_gradients(&[x.clone(), w.clone(), b], |t, v| feed_forward(t, v[0], v[1], Some(v[2])));
        check_gradients(&[x, w], |t, v| feed_forward(t, v[0], v[1], None));
    }
}
