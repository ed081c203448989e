//! Permutation-invariant SI-SNR loss.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::assign::hungarian_assign;
use super::metric::{si_snr, si_snr_grad, SiSnrOptions};
use crate::autograd::{add_into, Backward, Tape, Var};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `cost[i][j] = −SI-SNR(est_i, ref_j)` for `est: [C, T]` and `refs: [C, T]`.
pub fn cost_matrix<T: Scalar>(est: &Tensor<T>, refs: &Tensor<T>, opts: &SiSnrOptions) -> Result<Vec<Vec<f64>>> {
    let (c, t) = dims(est, refs)?;
    let (e, r) = (est.data(), refs.data());
    (0..c)
        .map(|i| {
            (0..c)
                .map(|j| si_snr(&e[i * t..(i + 1) * t], &r[j * t..(j + 1) * t], opts).map(|v| -v))
                .collect()
        })
        .collect()
}

fn dims<T: Scalar>(est: &Tensor<T>, refs: &Tensor<T>) -> Result<(usize, usize)> {
    if est.rank() != 2 || est.shape() != refs.shape() {
        return Err(shape_err("pit_loss", refs.shape(), est.shape()));
    }
    Ok((est.shape()[0], est.shape()[1]))
}

/// Mean negative SI-SNR over sources under the assignment that minimises it.
///
/// `est` is a `[C, T]` tape value; `refs` holds the `C` references. Returns
/// the scalar loss and `perm`, where estimate `i` is paired with reference
/// `perm[i]`. The assignment is held fixed during backward.
pub fn pit_loss<T: Scalar>(
    tape: &mut Tape<T>,
    est: Var,
    refs: &Tensor<T>,
    opts: &SiSnrOptions,
) -> Result<(Var, Vec<usize>)> {
    let e = tape.value(est);
    let (c, t) = dims(e, refs)?;
    let cost = cost_matrix(e, refs, opts)?;
    let perm = hungarian_assign(&cost)?;
    let loss = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / c as f64;
    let mut grad = Vec::with_capacity(c * t);
    if tape.needs_grad(&[est]) {
        let (ed, rd) = (e.data(), refs.data());
        for (i, &j) in perm.iter().enumerate() {
            let (_, g) = si_snr_grad(&ed[i * t..(i + 1) * t], &rd[j * t..(j + 1) * t], opts)?;
            grad.extend(g.into_iter().map(|v| -v / c as f64));
        }
    }
    let value = Tensor::from_vec(&[1], alloc::vec![T::of(loss)])?;
    let var = tape.push("pit_loss", value, &[est], Box::new(PitRule { grad }));
    Ok((var, perm))
}

struct PitRule {
    /// d loss / d est, flattened `[C, T]`.
    grad: Vec<f64>,
}

impl<T: Scalar> Backward<T> for PitRule {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let scale = g[0].as_f64();
        add_into(&mut grads[0], |d| {
            for (a, &b) in d.iter_mut().zip(&self.grad) {
                *a = *a + T::of(scale * b);
            }
        });
    }
}
