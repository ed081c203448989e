//! Synthetic "speakers": band-limited harmonic complexes with syllable-like
//! envelopes and a filtered-noise component. They stand in for recorded
//! speech when no utterance pool is supplied.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
use num_traits::Float;
use rand::Rng;

use crate::rng::substream;

/// Relative level of the floor between syllables, so a placed utterance is
/// nonzero over its whole extent.
const FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpeaker {
    /// Mean fundamental frequency, Hz.
    pub f0: f64,
    /// Pass band of the spectral envelope, Hz.
    pub band: (f64, f64),
    /// Share of filtered noise in `[0, 1]`.
    pub noise: f64,
}

/// A clean utterance tagged with its speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: usize,
    pub samples: Vec<f64>,
}

/// `count` speakers alternating between a low and a high register, each
/// with its own pitch and band.
pub fn speaker_pool(count: usize, seed: u64) -> Vec<SyntheticSpeaker> {
    (0..count)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            if i % 2 == 0 {
                let lo = rng.gen_range(80.0..200.0);
                SyntheticSpeaker {
                    f0: rng.gen_range(90.0..140.0),
                    band: (lo, lo + rng.gen_range(600.0..1000.0)),
                    noise: rng.gen_range(0.05..0.2),
                }
            } else {
                let lo = rng.gen_range(900.0..1400.0);
                SyntheticSpeaker {
                    f0: rng.gen_range(190.0..280.0),
                    band: (lo, lo + rng.gen_range(1200.0..2000.0)),
                    noise: rng.gen_range(0.05..0.2),
                }
            }
        })
        .collect()
}

impl SyntheticSpeaker {
    /// Renders `samples` samples at unit RMS, deterministic in `seed`.
    pub fn utterance(&self, seed: u64, samples: usize, sample_rate: u32) -> Vec<f64> {
        let fs = sample_rate as f64;
        let mut rng = substream(seed, 0x5e);
        let envelope = syllables(&mut rng, samples, fs);
        let nyquist = fs / 2.0;
        let (lo, hi) = (self.band.0, self.band.1.min(nyquist * 0.95));
        let weight = |f: f64| {
            if f < lo || f > hi {
                0.0
            } else {
                Float::sin(PI * (f - lo) / (hi - lo))
            }
        };
        let vibrato_rate = rng.gen_range(3.0..6.0);
        let vibrato_phase = rng.gen_range(0.0..TAU);
        let mut phase = 0.0;
        let mut out = vec![0.0; samples];
        // two-pole resonator at the band centre for the noise part
        let (centre, width) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        let r = Float::exp(-PI * width / fs);
        let (a1, a2) = (2.0 * r * Float::cos(TAU * centre / fs), -r * r);
        let (mut y1, mut y2) = (0.0, 0.0);
        let mut voiced = vec![0.0; samples];
        let mut noise = vec![0.0; samples];
        for n in 0..samples {
            let t = n as f64 / fs;
            let f0 = self.f0 * (1.0 + 0.04 * Float::sin(TAU * vibrato_rate * t + vibrato_phase));
            phase += TAU * f0 / fs;
            let mut v = 0.0;
            let mut k = 1.0;
            while k * f0 < hi {
                v += weight(k * f0) * Float::sin(k * phase) / Float::sqrt(k);
                k += 1.0;
            }
            voiced[n] = v;
            let y = rng.gen_range(-1.0..1.0) + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            noise[n] = y;
        }
        let scale = |x: &[f64]| Float::sqrt(x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).max(1e-12);
        let (sv, sn) = (scale(&voiced), scale(&noise));
        for n in 0..samples {
            let mix = (1.0 - self.noise) * voiced[n] / sv + self.noise * noise[n] / sn;
            out[n] = envelope[n] * mix + FLOOR * noise[n] / sn;
        }
        let s = scale(&out);
        out.iter_mut().for_each(|v| *v /= s);
        out
    }
}

/// Raised-cosine bursts of 120–350 ms separated by 30–120 ms pauses.
fn syllables<R: Rng>(rng: &mut R, samples: usize, fs: f64) -> Vec<f64> {
    let mut env = vec![0.0; samples];
    let mut pos = (rng.gen_range(0.0..0.05) * fs) as usize;
    while pos < samples {
        let len = (rng.gen_range(0.12..0.35) * fs) as usize;
        let gain = rng.gen_range(0.5..1.0);
        for i in 0..len.min(samples - pos) {
            env[pos + i] = gain * 0.5 * (1.0 - Float::cos(TAU * i as f64 / len as f64));
        }
        pos += len + (rng.gen_range(0.03..0.12) * fs) as usize;
    }
    env
}

/// `per_speaker` utterances of `samples` samples for each speaker.
pub fn synthetic_pool(speakers: &[SyntheticSpeaker], per_speaker: usize, samples: usize, seed: u64) -> Vec<Utterance> {
    let mut pool = Vec::with_capacity(speakers.len() * per_speaker);
    for (id, sp) in speakers.iter().enumerate() {
        for u in 0..per_speaker {
            let s = seed ^ ((id as u64) << 32 | u as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            pool.push(Utterance {
                speaker: id,
                samples: sp.utterance(s, samples, 8000),
            });
        }
    }
    pool
}
