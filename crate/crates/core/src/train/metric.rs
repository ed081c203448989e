//! Scale-invariant signal-to-noise ratio.

use num_traits::Float;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

const DB: f64 = 10.0 / core::f64::consts::LN_10;

/// Options shared by every SI-SNR evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiSnrOptions {
    /// Upper bound in dB; reached exactly when the residual vanishes.
    pub cap_db: f64,
    /// Subtract the mean of both signals first.
    pub zero_mean: bool,
}

impl Default for SiSnrOptions {
    fn default() -> Self {
        Self {
            cap_db: 60.0,
            zero_mean: false,
        }
    }
}

struct Projection {
    value: f64,
    capped: bool,
    /// `α·s` and `ŝ − α·s`, in the (possibly centred) domain.
    target: Vec<f64>,
    residual: Vec<f64>,
    target_energy: f64,
    residual_energy: f64,
}

fn centred<T: Scalar>(x: &[T], zero_mean: bool) -> Vec<f64> {
    let v: Vec<f64> = x.iter().map(|s| s.as_f64()).collect();
    if !zero_mean {
        return v;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|s| s - mean).collect()
}

fn project<T: Scalar>(est: &[T], reference: &[T], opts: &SiSnrOptions) -> Result<Projection> {
    if est.len() != reference.len() {
        return Err(shape_err("si_snr", &[reference.len()], &[est.len()]));
    }
    if est.is_empty() {
        return Err(Error::EmptyInput("si_snr"));
    }
    let s = centred(reference, opts.zero_mean);
    let e = centred(est, opts.zero_mean);
    let ref_energy: f64 = s.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::ZeroNorm("reference"));
    }
    if e.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroNorm("estimate"));
    }
    let alpha = e.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / ref_energy;
    let target: Vec<f64> = s.iter().map(|v| alpha * v).collect();
    let residual: Vec<f64> = e.iter().zip(&target).map(|(a, b)| a - b).collect();
    let target_energy: f64 = target.iter().map(|v| v * v).sum();
    let residual_energy: f64 = residual.iter().map(|v| v * v).sum();
    let raw = if residual_energy < 1e-12 * target_energy || residual_energy == 0.0 {
        f64::INFINITY
    } else {
        DB * Float::ln(target_energy / residual_energy)
    };
    let capped = raw >= opts.cap_db;
    Ok(Projection {
        value: raw.min(opts.cap_db),
        capped,
        target,
        residual,
        target_energy,
        residual_energy,
    })
}

/// `10·log10(‖αs‖² / ‖ŝ − αs‖²)` with `α = ŝᵀs / ‖s‖²`, clamped to the cap.
pub fn si_snr<T: Scalar>(est: &[T], reference: &[T], opts: &SiSnrOptions) -> Result<f64> {
    project(est, reference, opts).map(|p| p.value)
}

/// SI-SNR of `est` minus SI-SNR of the unprocessed `mixture`.
pub fn si_snri<T: Scalar>(est: &[T], reference: &[T], mixture: &[T], opts: &SiSnrOptions) -> Result<f64> {
    Ok(si_snr(est, reference, opts)? - si_snr(mixture, reference, opts)?)
}

/// SI-SNR and its gradient with respect to `est`. The gradient is zero where
/// the cap is active.
pub fn si_snr_grad<T: Scalar>(est: &[T], reference: &[T], opts: &SiSnrOptions) -> Result<(f64, Vec<f64>)> {
    let p = project(est, reference, opts)?;
    if p.capped {
        return Ok((p.value, alloc::vec![0.0; est.len()]));
    }
    let (a, b) = (2.0 * DB / p.target_energy, 2.0 * DB / p.residual_energy);
    let mut g: Vec<f64> = p.target.iter().zip(&p.residual).map(|(t, r)| a * t - b * r).collect();
    if opts.zero_mean {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        g.iter_mut().for_each(|v| *v -= mean);
    }
    Ok((p.value, g))
}
