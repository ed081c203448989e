//! Central finite-difference verification of tape gradients (64-bit).

use alloc::vec::Vec;
use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::rng::seeded;
use crate::tensor::{Init, Tensor};

pub const STEP: f64 = 1e-5;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::new(shape, Init::Uniform(-1.0, 1.0), &mut seeded(seed)).unwrap()
}

/// Largest relative error `|analytic - numeric| / (|analytic| + 1e-8)` over
/// every element of every input.
///
/// The scalar under test is `sum(f(inputs) ⊙ R)` for a fixed random `R`, so
/// every output element contributes with a distinct weight.
pub fn max_relative_error<F>(inputs: &[Tensor<f64>], f: F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>], track: bool| -> Result<(f64, Option<Vec<Vec<f64>>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), track)).collect();
        let out = f(&mut tape, &vars)?;
        let mut rng = seeded(0xfd);
        let n = tape.value(out).len();
        let proj: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shape = tape.shape(out).to_vec();
        let r = tape.constant(Tensor::from_vec(&shape, proj)?);
        let prod = tape.mul(out, r)?;
        let loss = tape.sum(prod);
        let value = tape.value(loss).data()[0];
        if !track {
            return Ok((value, None));
        }
        let grads = tape.backward(loss)?;
        let g = vars
            .iter()
            .map(|&v| grads.get(v).map(|s| s.to_vec()).unwrap_or_else(|| alloc::vec![0.0; tape.value(v).len()]))
            .collect();
        Ok((value, Some(g)))
    };

    let (_, analytic) = eval(inputs, true)?;
    let analytic = analytic.expect("tracked evaluation returns gradients");
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let x0 = input.data()[i];
            probe[k].data_mut()[i] = x0 + STEP;
            let (fp, _) = eval(&probe, false)?;
            probe[k].data_mut()[i] = x0 - STEP;
            let (fm, _) = eval(&probe, false)?;
            probe[k].data_mut()[i] = x0;
            let numeric = (fp - fm) / (2.0 * STEP);
            let a = analytic[k][i];
            worst = worst.max((a - numeric).abs() / (a.abs() + 1e-8));
        }
    }
    Ok(worst)
}

/// Panics unless [`max_relative_error`] is below `1e-4`.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], f: F)
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let err = max_relative_error(inputs, f).unwrap();
    assert!(err < 1e-4, "finite-difference mismatch: relative error {err:e}");
}
