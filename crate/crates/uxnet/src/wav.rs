//! WAV reading and writing. Samples are real values in `[-1, 1]`, one
//! vector per channel.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{IoError, Result};

/// Encoding of written files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub channels: Vec<Vec<f32>>,
    pub sample_rate: u32,
}

impl Audio {
    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn malformed(path: &Path, reason: impl ToString) -> IoError {
    IoError::MalformedAudio {
        path: path.into(),
        reason: reason.to_string(),
    }
}

/// Reads a PCM16 or 32-bit float file. With `expected_rate` set, any other
/// rate is an error; nothing is resampled.
pub fn read_wav(path: &Path, expected_rate: Option<u32>) -> Result<Audio> {
    let file = std::fs::File::open(path).map_err(|e| IoError::file(path, e))?;
    let reader = WavReader::new(std::io::BufReader::new(file)).map_err(|e| match e {
        hound::Error::Unsupported => IoError::UnsupportedAudio {
            path: path.into(),
            reason: "codec".into(),
        },
        other => malformed(path, other),
    })?;
    let spec = reader.spec();
    if let Some(expected) = expected_rate {
        if spec.sample_rate != expected {
            return Err(IoError::SampleRate {
                path: path.into(),
                expected,
                found: spec.sample_rate,
            });
        }
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| malformed(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| malformed(path, e))?,
        (format, bits) => {
            return Err(IoError::UnsupportedAudio {
                path: path.into(),
                reason: format!("{bits}-bit {format:?}"),
            })
        }
    };
    let m = usize::from(spec.channels);
    if interleaved.is_empty() {
        return Err(malformed(path, "no samples"));
    }
    let mut channels = vec![Vec::with_capacity(interleaved.len() / m); m];
    for frame in interleaved.chunks_exact(m) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(Audio {
        channels,
        sample_rate: spec.sample_rate,
    })
}

/// Writes equal-length channels. PCM16 rounds to the nearest step and
/// saturates outside `[-1, 1)`.
pub fn write_wav(path: &Path, channels: &[Vec<f32>], sample_rate: u32, format: WavFormat) -> Result<()> {
    let len = channels.first().map_or(0, Vec::len);
    if channels.is_empty() || channels.iter().any(|c| c.len() != len) {
        return Err(malformed(path, "channels must be non-empty and of equal length"));
    }
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: u16::try_from(channels.len()).map_err(|_| malformed(path, "too many channels"))?,
        sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => IoError::file(path, io),
        other => malformed(path, other),
    };
    let mut writer = WavWriter::create(path, spec).map_err(to_io)?;
    for t in 0..len {
        for ch in channels {
            match format {
                WavFormat::Pcm16 => {
                    let v = (ch[t] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v).map_err(to_io)?;
                }
                WavFormat::Float32 => writer.write_sample(ch[t]).map_err(to_io)?,
            }
        }
    }
    writer.finalize().map_err(to_io)
}
