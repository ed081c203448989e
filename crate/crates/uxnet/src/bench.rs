//! Real-time factor and complexity reporting.

use std::time::Instant;

use serde::Serialize;
use uxnet_core::framing::StreamingFramer;
use uxnet_core::model::{Model, StreamState};
use uxnet_core::profile::ComplexityReport;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RtfReport {
    /// Seconds of audio per run.
    pub audio_seconds: f64,
    /// Wall-clock seconds of each timed run.
    pub runs: Vec<f64>,
    /// Median wall-clock seconds divided by `audio_seconds`.
    pub rtf: f64,
}

/// Deterministic test input in `[-0.5, 0.5)`.
pub fn probe_signal(channels: usize, samples: usize) -> Vec<Vec<f32>> {
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    (0..channels)
        .map(|_| {
            (0..samples)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (state >> 40) as f32 / (1u64 << 24) as f32 - 0.5
                })
                .collect()
        })
        .collect()
}

/// Streams `input` sample by sample through framing, the model and
/// overlap-add; returns `C` waveforms of the input length.
pub fn stream_signal(model: &Model<f32>, state: &mut StreamState<f32>, input: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
    let cfg = *model.config();
    let len = input.first().map_or(0, Vec::len);
    let mut framer = StreamingFramer::new(cfg.frame_spec(), cfg.in_channels)?;
    let mut out = vec![Vec::with_capacity(len + cfg.frame_len); cfg.sources];
    let mut chunk = vec![0.0f32; cfg.sources * cfg.hop];
    let mut sample = vec![0.0f32; cfg.in_channels];
    let mut emit = |frame: &[f32], out: &mut Vec<Vec<f32>>| -> Result<()> {
        model.stream_frame(state, frame, &mut chunk)?;
        for (ch, o) in out.iter_mut().enumerate() {
            o.extend_from_slice(&chunk[ch * cfg.hop..(ch + 1) * cfg.hop]);
        }
        Ok(())
    };
    for t in 0..len {
        for (s, ch) in sample.iter_mut().zip(input) {
            *s = ch[t];
        }
        if let Some(frame) = framer.push(&sample)? {
            emit(frame, &mut out)?;
        }
    }
    if let Some(frame) = framer.finish() {
        emit(frame, &mut out)?;
    }
    for (o, tail) in out.iter_mut().zip(model.flush_stream(state)) {
        o.extend(tail);
        o.truncate(len);
    }
    Ok(out)
}

/// Times streaming inference over `seconds` of audio. One warm-up run is
/// discarded; the reported factor is the median of `runs` (at least 5).
pub fn measure_rtf(model: &Model<f32>, seconds: f64, runs: usize) -> Result<RtfReport> {
    let cfg = model.config();
    let samples = (seconds * f64::from(cfg.sample_rate)).round() as usize;
    let input = probe_signal(cfg.in_channels, samples.max(1));
    let mut state = StreamState::new(model)?;
    stream_signal(model, &mut state, &input)?;
    let mut times = Vec::with_capacity(runs.max(5));
    for _ in 0..runs.max(5) {
        let start = Instant::now();
        let out = stream_signal(model, &mut state, &input)?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    Ok(RtfReport {
        audio_seconds: seconds,
        runs: times,
        rtf: median / seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitRecord<'a> {
    pub unit: &'a str,
    pub submodule: &'a str,
    pub parameters: usize,
    pub macs: u64,
    pub pointwise: u64,
    pub ffpf: u64,
}

/// One JSON line per unit followed by a totals line.
pub fn complexity_records(report: &ComplexityReport) -> Vec<String> {
    let mut lines: Vec<String> = report
        .units
        .iter()
        .map(|u| {
            serde_json::to_string(&UnitRecord {
                unit: &u.name,
                submodule: uxnet_core::profile::submodule(&u.name),
                parameters: u.params,
                macs: u.macs,
                pointwise: u.pointwise,
                ffpf: u.ffpf(),
            })
            .expect("records serialize")
        })
        .collect();
    lines.push(
        serde_json::json!({
            "unit": "total",
            "parameters": report.total_params(),
            "macs": report.total_macs(),
            "ffpf": report.ffpf(),
        })
        .to_string(),
    );
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use uxnet_core::model::ModelConfig;

    #[test]
    fn sample_streaming_matches_offline() {
        let model = Model::<f32>::new(ModelConfig::preset("tiny").unwrap(), 4).unwrap();
        let input = probe_signal(1, 1003);
        let mut state = StreamState::new(&model).unwrap();
        let live = stream_signal(&model, &mut state, &input).unwrap();
        let offline = model.separate_waveform(&input).unwrap();
        assert_eq!(live.len(), 2);
        for (a, b) in live.iter().zip(&offline) {
            assert_eq!(a.len(), 1003);
            let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
            assert!(worst <= 1e-5, "{worst}");
        }
    }

    #[test]
    fn rtf_uses_the_median_of_at_least_five_runs() {
        let model = Model::<f32>::new(ModelConfig::preset("tiny").unwrap(), 0).unwrap();
        let r = measure_rtf(&model, 0.05, 1).unwrap();
        assert_eq!(r.runs.len(), 5);
        let mut s = r.runs.clone();
        s.sort_by(f64::total_cmp);
        assert!((r.rtf - s[2] / 0.05).abs() < 1e-12);
    }

    #[test]
    fn records_end_with_totals() {
        let cfg = ModelConfig::preset("tiny").unwrap();
        let model = Model::<f32>::new(cfg, 0).unwrap();
        let report = ComplexityReport::new(&cfg, model.params()).unwrap();
        let lines = complexity_records(&report);
        assert_eq!(lines.len(), report.units.len() + 1);
        let total: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
        assert_eq!(total["ffpf"], report.ffpf());
    }
}
