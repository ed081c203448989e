//! Image-method room impulse responses.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::room::{distance, RoomSpec, SceneSpec, SPEED_OF_SOUND};
use crate::error::{Error, Result};

/// Length of the early part after the direct path, in seconds.
pub const EARLY_WINDOW: f64 = 0.05;
/// Responses are truncated at this multiple of T60.
pub const TRUNCATION: f64 = 1.1;

/// Impulse response from one source to one microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    /// Sample index of the direct path.
    pub direct_delay: usize,
}

/// Wall reflection coefficient shared by all six surfaces.
///
/// Chosen so that the Schroeder decay of [`image_rir`] output matches
/// `room.t60`: the image density is averaged over directions, including the
/// coherent sum of images that land on the same sample, and the coefficient
/// is found by bisection on the predicted decay time.
pub fn reflection_coefficient(room: &RoomSpec, sample_rate: u32) -> Result<f64> {
    let t60 = room.t60;
    if !(t60 > 0.0 && t60.is_finite()) {
        return Err(Error::Reverberation { t60 });
    }
    let len = rir_len(t60, sample_rate);
    let rates = crossing_rates(room.dims());
    let excess = |beta: f64| predicted_t60(room, &rates, beta, sample_rate, len).map_or(f64::INFINITY, |t| t - t60);
    // The prediction rises with β until truncation flattens it near 1, so
    // bracket the first crossing on a grid before bisecting.
    let mut lo = 0.0;
    let mut hi = None;
    for b in (1..50).map(|k| k as f64 / 50.0) {
        if excess(b) > 0.0 {
            hi = Some(b);
            break;
        }
        lo = b;
    }
    if lo == 0.0 {
        return Err(Error::Reverberation { t60 });
    }
    let mut hi = hi.ok_or(Error::Reverberation { t60 })?;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn rir_len(t60: f64, sample_rate: u32) -> usize {
    Float::ceil(TRUNCATION * t60 * sample_rate as f64) as usize
}

/// Wall crossings per metre travelled, `Σ |u_a| / L_a`, for a spiral set of
/// directions `u` on the sphere.
fn crossing_rates(dims: [f64; 3]) -> Vec<f64> {
    const DIRECTIONS: usize = 256;
    let golden = core::f64::consts::PI * (1.0 + Float::sqrt(5.0));
    (0..DIRECTIONS)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / DIRECTIONS as f64;
            let r = Float::sqrt(1.0 - z * z);
            let phi = golden * i as f64;
            let u = [r * Float::cos(phi), r * Float::sin(phi), z];
            (0..3).map(|a| Float::abs(u[a]) / dims[a]).sum()
        })
        .collect()
}

/// Decay time the image sum will show for `beta`, from its expected energy
/// envelope `λ·E[a²] + λ²·E[a]²` with `λ` images per sample.
fn predicted_t60(room: &RoomSpec, rates: &[f64], beta: f64, sample_rate: u32, len: usize) -> Option<f64> {
    const STEP: usize = 8;
    let fs = sample_rate as f64;
    let ln_beta = Float::ln(beta);
    let n = rates.len() as f64;
    let envelope: Vec<f64> = (0..len.div_ceil(STEP))
        .map(|k| {
            let path = SPEED_OF_SOUND * ((k * STEP).max(1) as f64 / fs);
            let density = 4.0 * core::f64::consts::PI * path * path * (SPEED_OF_SOUND / fs) / room.volume();
            let spread = 4.0 * core::f64::consts::PI * path;
            let (mut m1, mut m2) = (0.0, 0.0);
            for &g in rates {
                let a = Float::exp(ln_beta * path * g);
                m1 += a;
                m2 += a * a;
            }
            let (m1, m2) = (m1 / (n * spread), m2 / (n * spread * spread));
            density * m2 + density * density * m1 * m1
        })
        .collect();
    decay_fit(&envelope, STEP as f64 / fs)
}

pub fn delay_samples(d: f64, sample_rate: u32) -> usize {
    Float::round(d / SPEED_OF_SOUND * sample_rate as f64) as usize
}

/// Sum of image sources with amplitude `β^order / (4π·d)` at the nearest
/// sample, over all images arriving before `len` samples.
pub fn image_rir(dims: [f64; 3], beta: f64, source: [f64; 3], mic: [f64; 3], sample_rate: u32, len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len];
    let fs = sample_rate as f64;
    let reach = len as f64 / fs * SPEED_OF_SOUND;
    // Per axis: (offset of the image from the mic, reflections).
    let axis = |a: usize| {
        let span = 2.0 * dims[a];
        let n_max = Float::ceil(reach / span) as i64 + 1;
        let mut out = Vec::new();
        for n in -n_max..=n_max {
            for q in 0..2i64 {
                let pos = (1 - 2 * q) as f64 * source[a] + n as f64 * span;
                let order = (n - q).unsigned_abs() + n.unsigned_abs();
                let off = pos - mic[a];
                if Float::abs(off) <= reach && (beta > 0.0 || order == 0) {
                    out.push((off, order as i32));
                }
            }
        }
        out
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    let r2 = reach * reach;
    for &(x, ox) in &ax {
        for &(y, oy) in &ay {
            let xy = x * x + y * y;
            if xy > r2 {
                continue;
            }
            for &(z, oz) in &az {
                let d2 = xy + z * z;
                if d2 > r2 {
                    continue;
                }
                let d = Float::sqrt(d2);
                let tap = Float::round(d / SPEED_OF_SOUND * fs) as usize;
                if tap < len {
                    h[tap] += Float::powi(beta, ox + oy + oz) / (4.0 * core::f64::consts::PI * d);
                }
            }
        }
    }
    h
}

/// Response from source `source` to microphone `mic` of `scene`. With
/// `anechoic` the walls absorb everything and only the direct path remains.
pub fn generate_rir(scene: &SceneSpec, source: usize, mic: usize, anechoic: bool) -> Result<Rir> {
    generate_rir_with(scene, source, mic, anechoic, None)
}

/// [`generate_rir`] with a precomputed reflection coefficient.
pub fn generate_rir_with(
    scene: &SceneSpec,
    source: usize,
    mic: usize,
    anechoic: bool,
    beta: Option<f64>,
) -> Result<Rir> {
    let (s, m) = (scene.sources[source], scene.mics[mic]);
    let direct_delay = delay_samples(distance(s, m), scene.sample_rate);
    let (beta, len) = if anechoic {
        (0.0, direct_delay + 1)
    } else {
        let beta = match beta {
            Some(b) => b,
            None => reflection_coefficient(&scene.room, scene.sample_rate)?,
        };
        (beta, rir_len(scene.room.t60, scene.sample_rate).max(direct_delay + 1))
    };
    let taps = image_rir(scene.room.dims(), beta, s, m, scene.sample_rate, len);
    Ok(Rir { taps, direct_delay })
}

/// First sample of the late part: direct path plus [`EARLY_WINDOW`].
pub fn early_cutoff(direct_delay: usize, sample_rate: u32) -> usize {
    direct_delay + Float::round(EARLY_WINDOW * sample_rate as f64) as usize
}

/// Splits `h` at `cutoff` into an early part (`h[..cutoff]`, zeros after)
/// and a late part (zeros before, `h[cutoff..]`).
pub fn split_rir(h: &[f64], cutoff: usize) -> (Vec<f64>, Vec<f64>) {
    let cut = cutoff.min(h.len());
    let mut early = h.to_vec();
    let mut late = h.to_vec();
    early[cut..].iter_mut().for_each(|v| *v = 0.0);
    late[..cut].iter_mut().for_each(|v| *v = 0.0);
    (early, late)
}

/// Reverberation time from the Schroeder energy-decay curve: a least-squares
/// line through the decay between -5 and -35 dB, extrapolated to 60 dB.
pub fn schroeder_t60(h: &[f64], sample_rate: u32) -> Option<f64> {
    let energy: Vec<f64> = h.iter().map(|v| v * v).collect();
    decay_fit(&energy, 1.0 / sample_rate as f64)
}

/// Schroeder fit on an energy sequence sampled every `dt` seconds.
fn decay_fit(energy: &[f64], dt: f64) -> Option<f64> {
    let mut edc = vec![0.0; energy.len()];
    let mut acc = 0.0;
    for (e, v) in edc.iter_mut().zip(energy).rev() {
        acc += v;
        *e = acc;
    }
    if !(acc > 0.0 && acc.is_finite()) {
        return None;
    }
    let points: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(i, &e)| (i as f64 * dt, 10.0 * Float::log10(e / acc)))
        .skip_while(|&(_, db)| db > -5.0)
        .take_while(|&(_, db)| db >= -35.0)
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}
