//! Rendering a scene into microphone signals and separation targets.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::rir::{early_cutoff, generate_rir_with, reflection_coefficient, split_rir};
use super::room::{SceneSpec, ARRAY_SIZE};
use crate::error::{Error, Result};

/// Which image of each source the network should recover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetKind {
    /// Source convolved with its full response at the reference mic.
    #[default]
    Reverberant,
    /// Source convolved with the early part only (separation plus
    /// dereverberation).
    Early,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixOptions {
    /// Microphones used, taken from the front of the array.
    pub channels: usize,
    pub target: TargetKind,
    pub anechoic: bool,
}

impl Default for MixOptions {
    fn default() -> Self {
        Self {
            channels: 1,
            target: TargetKind::Reverberant,
            anechoic: false,
        }
    }
}

/// Rendered audio of one scene, all signals `scene.samples()` long.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    /// One waveform per microphone.
    pub channels: Vec<Vec<f64>>,
    /// One target per source, at microphone 0.
    pub targets: Vec<Vec<f64>>,
    /// Active span `[start, end)` of each dry source.
    pub active: Vec<(usize, usize)>,
    /// Gain applied to each dry source.
    pub gains: Vec<f64>,
}

/// Active spans for `sources` sources in `samples` samples. Each source is
/// active for `samples·(1+ρ)/2` samples; the first starts at 0, the last
/// ends at `samples`, so two sources overlap for `ρ·samples`.
pub fn active_spans(samples: usize, sources: usize, overlap: f64) -> Vec<(usize, usize)> {
    if sources <= 1 {
        return vec![(0, samples); sources];
    }
    let len = Float::round(samples as f64 * (1.0 + overlap) / 2.0) as usize;
    let len = len.min(samples);
    (0..sources)
        .map(|i| {
            let start = (samples - len) * i / (sources - 1);
            (start, start + len)
        })
        .collect()
}

/// Full linear convolution, `x.len() + h.len() - 1` samples.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let nonzero = h.iter().filter(|v| **v != 0.0).count();
    #[cfg(feature = "std")]
    if nonzero > 64 && x.len() > 64 {
        return fft_convolve(x, h);
    }
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (k, &hk) in h.iter().enumerate() {
        if hk != 0.0 {
            out[k..k + x.len()].iter_mut().zip(x).for_each(|(o, &v)| *o += hk * v);
        }
    }
    let _ = nonzero;
    out
}

#[cfg(feature = "std")]
fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    use rustfft::num_complex::Complex;
    let n = x.len() + h.len() - 1;
    let size = n.next_power_of_two();
    let mut planner = rustfft::FftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(size), planner.plan_fft_inverse(size));
    let load = |s: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        buf.iter_mut().zip(s).for_each(|(b, &v)| b.re = v);
        buf
    };
    let (mut a, mut b) = (load(x), load(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(p, q)| *p *= q);
    inv.process(&mut a);
    a[..n].iter().map(|c| c.re / size as f64).collect()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Renders `scene` with the given dry sources.
///
/// Each source is cut or zero padded to its active span, convolved with its
/// responses and summed per microphone. Sources after the first are scaled
/// so that the first is `scene.snr_db` louder at microphone 0, measured over
/// the region where all sources are active (the whole mixture if they never
/// all overlap).
pub fn synthesize_mixture(scene: &SceneSpec, sources: &[Vec<f64>], opts: &MixOptions) -> Result<Mixture> {
    let c = scene.sources.len();
    if sources.len() != c {
        return Err(Error::InvalidConfig(alloc::format!("scene has {c} sources, got {} signals", sources.len())));
    }
    if opts.channels == 0 || opts.channels > ARRAY_SIZE {
        return Err(Error::InvalidConfig(alloc::format!("channels must be in 1..={ARRAY_SIZE}")));
    }
    let t = scene.samples();
    let spans = active_spans(t, c, scene.overlap_ratio);
    let beta = if opts.anechoic { None } else { Some(reflection_coefficient(&scene.room, scene.sample_rate)?) };
    let mut images = Vec::with_capacity(c);
    let mut targets = Vec::with_capacity(c);
    for (i, (src, &(start, end))) in sources.iter().zip(&spans).enumerate() {
        let dry: Vec<f64> = (0..end - start).map(|n| src.get(n).copied().unwrap_or(0.0)).collect();
        if energy(&dry) == 0.0 {
            return Err(Error::SilentSource(i));
        }
        let place = |y: Vec<f64>| {
            let mut out = vec![0.0; t];
            for (o, v) in out[start..].iter_mut().zip(y) {
                *o = v;
            }
            out
        };
        let mut per_mic = Vec::with_capacity(opts.channels);
        for m in 0..opts.channels {
            let rir = generate_rir_with(scene, i, m, opts.anechoic, beta)?;
            if m == 0 {
                let h = match opts.target {
                    TargetKind::Reverberant => rir.taps.clone(),
                    TargetKind::Early => split_rir(&rir.taps, early_cutoff(rir.direct_delay, scene.sample_rate)).0,
                };
                targets.push(place(convolve(&dry, &h)));
            }
            per_mic.push(place(convolve(&dry, &rir.taps)));
        }
        images.push(per_mic);
    }
    let lo = spans.iter().map(|s| s.0).max().unwrap_or(0);
    let hi = spans.iter().map(|s| s.1).min().unwrap_or(t);
    let region = if lo < hi { lo..hi } else { 0..t };
    let reference = energy(&images[0][0][region.clone()]);
    let mut gains = vec![1.0; c];
    for i in 1..c {
        let e = energy(&images[i][0][region.clone()]);
        if e > 0.0 && reference > 0.0 {
            gains[i] = Float::sqrt(reference / (e * Float::powf(10.0, scene.snr_db / 10.0)));
        }
    }
    let mut channels = vec![vec![0.0; t]; opts.channels];
    for (i, per_mic) in images.iter().enumerate() {
        for (ch, img) in channels.iter_mut().zip(per_mic) {
            ch.iter_mut().zip(img).for_each(|(o, v)| *o += gains[i] * v);
        }
        targets[i].iter_mut().for_each(|v| *v *= gains[i]);
    }
    Ok(Mixture {
        channels,
        targets,
        active: spans,
        gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::room::{distance, sample_scene};
    use crate::synth::rir::delay_samples;
    use crate::synth::speaker::speaker_pool;

    fn sources(scene: &SceneSpec) -> Vec<Vec<f64>> {
        let pool = speaker_pool(2, scene.seed);
        (0..scene.sources.len()).map(|i| pool[i].utterance(scene.seed + i as u64, scene.samples(), 8000)).collect()
    }

    fn short(seed: u64, c: usize) -> SceneSpec {
        let mut s = sample_scene(seed, c);
        s.duration = 0.5;
        s
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let h: Vec<f64> = (0..300).map(|i| ((i * 13 % 29) as f64 - 14.0) / 30.0).collect();
        let fast = convolve(&x, &h);
        let mut slow = vec![0.0; 799];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                slow[i + j] += a * b;
            }
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn single_anechoic_source_is_delayed_and_scaled() {
        let scene = short(4, 1);
        let src = sources(&scene);
        let opts = MixOptions {
            anechoic: true,
            ..Default::default()
        };
        let mix = synthesize_mixture(&scene, &src, &opts).unwrap();
        let d = distance(scene.sources[0], scene.mics[0]);
        let delay = delay_samples(d, 8000);
        let g = 1.0 / (4.0 * core::f64::consts::PI * d);
        let x = &mix.channels[0];
        assert!(x[..delay].iter().all(|&v| v == 0.0));
        for n in delay..x.len() {
            assert!((x[n] - g * src[0][n - delay]).abs() < 1e-12);
        }
        assert_eq!(mix.targets[0], mix.channels[0]);
    }

    #[test]
    fn linear_in_a_single_source() {
        let scene = short(6, 1);
        let src = sources(&scene);
        let scaled = vec![src[0].iter().map(|v| 2.5 * v).collect::<Vec<_>>()];
        let opts = MixOptions {
            channels: 3,
            ..Default::default()
        };
        let a = synthesize_mixture(&scene, &src, &opts).unwrap();
        let b = synthesize_mixture(&scene, &scaled, &opts).unwrap();
        for (x, y) in a.channels.iter().flatten().zip(b.channels.iter().flatten()) {
            assert!((2.5 * x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn realised_overlap_matches() {
        for seed in 0..20 {
            let scene = sample_scene(100 + seed, 2);
            let src = sources(&scene);
            let opts = MixOptions {
                anechoic: true,
                ..Default::default()
            };
            let mix = synthesize_mixture(&scene, &src, &opts).unwrap();
            let t = scene.samples();
            let both = (0..t).filter(|&n| mix.targets.iter().all(|x| x[n] != 0.0)).count();
            let realised = both as f64 / t as f64;
            assert!((realised - scene.overlap_ratio).abs() < 0.02, "{realised} vs {}", scene.overlap_ratio);
        }
    }

    #[test]
    fn snr_is_measured_over_the_overlap() {
        let scene = short(21, 2);
        let src = sources(&scene);
        let mix = synthesize_mixture(&scene, &src, &MixOptions::default()).unwrap();
        let (lo, hi) = (mix.active[1].0, mix.active[0].1);
        let e = |x: &[f64]| energy(&x[lo..hi]);
        let snr = 10.0 * (e(&mix.targets[0]) / e(&mix.targets[1])).log10();
        assert!((snr - scene.snr_db).abs() < 1e-9);
    }

    #[test]
    fn early_target_is_part_of_the_full_one() {
        let scene = short(8, 2);
        let src = sources(&scene);
        let full = synthesize_mixture(&scene, &src, &MixOptions::default()).unwrap();
        let early = synthesize_mixture(
            &scene,
            &src,
            &MixOptions {
                target: TargetKind::Early,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(full.channels, early.channels);
        assert!(energy(&early.targets[0]) < energy(&full.targets[0]));
    }

    #[test]
    fn silent_sources_are_rejected() {
        let scene = short(2, 2);
        let src = vec![vec![1.0; 10], vec![0.0; 10]];
        assert_eq!(
            synthesize_mixture(&scene, &src, &MixOptions::default()),
            Err(Error::SilentSource(1))
        );
    }

    #[test]
    fn spans() {
        assert_eq!(active_spans(100, 2, 0.5), [(0, 75), (25, 100)]);
        assert_eq!(active_spans(100, 1, 0.5), [(0, 100)]);
    }
}
