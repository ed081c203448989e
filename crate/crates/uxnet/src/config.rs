//! Flat `key = value` run configuration.
//!
//! ```text
//! # UL-Net, N = 256
//! preset = ulnet256
//! rnn = gru
//! epochs = 20
//! data_dir = data/anechoic
//! ```
//!
//! `preset` is applied before every other key regardless of its position.
//! Unknown keys and malformed values are errors.

use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use uxnet_core::model::ModelConfig;
use uxnet_core::nn::{NormKind, RnnKind};
use uxnet_core::train::TrainConfig;

use crate::error::{IoError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Dataset directory written by `synth`.
    pub data_dir: PathBuf,
    /// Where checkpoints and logs go.
    pub out_dir: PathBuf,
    /// Seeds model initialisation.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

pub const KEYS: [&str; 25] = [
    "preset",
    "in_channels",
    "sources",
    "latent",
    "frame_len",
    "hop",
    "sample_rate",
    "depth",
    "rnn",
    "blocks",
    "norm",
    "channel_interaction",
    "unit_kernel",
    "mixer_kernel",
    "epochs",
    "batch_size",
    "lr0",
    "lr_decay",
    "decay_every",
    "clip",
    "si_snr_cap",
    "zero_mean",
    "data_dir",
    "out_dir",
    "seed",
];

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn kernel(value: &str) -> std::result::Result<(usize, usize), String> {
    let (t, f) = value.split_once('x').ok_or_else(|| format!("kernel {value:?} is not TxF"))?;
    Ok((parse(t.trim())?, parse(f.trim())?))
}

impl RunConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let m = &mut self.model;
        let t = &mut self.train;
        match key.trim() {
            "preset" => *m = ModelConfig::preset(v).map_err(|e| e.to_string())?,
            "in_channels" => m.in_channels = parse(v)?,
            "sources" => m.sources = parse(v)?,
            "latent" => m.latent = parse(v)?,
            "frame_len" => m.frame_len = parse(v)?,
            "hop" => m.hop = parse(v)?,
            "sample_rate" => m.sample_rate = parse(v)?,
            "depth" => m.depth = parse(v)?,
            "rnn" => {
                m.rnn = match v {
                    "lstm" => RnnKind::Lstm,
                    "gru" => RnnKind::Gru,
                    _ => return Err(format!("rnn must be lstm or gru, got {v:?}")),
                }
            }
            "blocks" => m.blocks = parse(v)?,
            "norm" => {
                m.norm = match v {
                    "cumulative" => NormKind::Cumulative,
                    "framewise" => NormKind::Framewise,
                    _ => return Err(format!("norm must be cumulative or framewise, got {v:?}")),
                }
            }
            "channel_interaction" => m.channel_interaction = parse(v)?,
            "unit_kernel" => m.unit_kernel = kernel(v)?,
            "mixer_kernel" => m.mixer_kernel = kernel(v)?,
            "epochs" => t.epochs = parse(v)?,
            "batch_size" => t.batch_size = parse(v)?,
            "lr0" => t.lr0 = parse(v)?,
            "lr_decay" => t.lr_decay = parse(v)?,
            "decay_every" => t.decay_every = parse(v)?,
            "clip" => t.clip = parse(v)?,
            "si_snr_cap" => t.si_snr.cap_db = parse(v)?,
            "zero_mean" => t.si_snr.zero_mean = parse(v)?,
            "data_dir" => self.data_dir = v.into(),
            "out_dir" => self.out_dir = v.into(),
            "seed" => {
                self.seed = parse(v)?;
                t.seed = self.seed;
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Parses `text`; `source` names it in diagnostics.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| IoError::Config {
                path: source.into(),
                line: i + 1,
                reason: "expected key = value".into(),
            })?;
            entries.push((i + 1, k.trim().to_owned(), v.trim().to_owned()));
        }
        entries.sort_by_key(|(_, k, _)| k != "preset");
        let mut cfg = Self::default();
        for (line, k, v) in entries {
            cfg.set(&k, &v).map_err(|reason| IoError::Config {
                path: source.into(),
                line,
                reason,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for (i, o) in overrides.into_iter().enumerate() {
            let (k, v) = o.split_once('=').ok_or_else(|| IoError::Config {
                path: "--set".into(),
                line: i + 1,
                reason: format!("expected key=value, got {o:?}"),
            })?;
            self.set(k, v).map_err(|reason| IoError::Config {
                path: "--set".into(),
                line: i + 1,
                reason,
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Renders every key; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mut s = String::new();
        let rnn = match m.rnn {
            RnnKind::Lstm => "lstm",
            RnnKind::Gru => "gru",
        };
        let norm = match m.norm {
            NormKind::Cumulative => "cumulative",
            NormKind::Framewise => "framewise",
        };
        let rows: [(&str, String); 24] = [
            ("in_channels", m.in_channels.to_string()),
            ("sources", m.sources.to_string()),
            ("latent", m.latent.to_string()),
            ("frame_len", m.frame_len.to_string()),
            ("hop", m.hop.to_string()),
            ("sample_rate", m.sample_rate.to_string()),
            ("depth", m.depth.to_string()),
            ("rnn", rnn.into()),
            ("blocks", m.blocks.to_string()),
            ("norm", norm.into()),
            ("channel_interaction", m.channel_interaction.to_string()),
            ("unit_kernel", format!("{}x{}", m.unit_kernel.0, m.unit_kernel.1)),
            ("mixer_kernel", format!("{}x{}", m.mixer_kernel.0, m.mixer_kernel.1)),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr0", format!("{:?}", t.lr0)),
            ("lr_decay", format!("{:?}", t.lr_decay)),
            ("decay_every", t.decay_every.to_string()),
            ("clip", format!("{:?}", t.clip)),
            ("si_snr_cap", format!("{:?}", t.si_snr.cap_db)),
            ("zero_mean", t.si_snr.zero_mean.to_string()),
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_reference_network() {
        let c = RunConfig::default();
        assert_eq!(c.model.latent, 256);
        assert_eq!(c.model.depth, 5);
        assert_eq!((c.model.frame_len, c.model.hop), (16, 8));
        assert_eq!(c.model.rnn, RnnKind::Lstm);
        assert_eq!(c.model.blocks, 1);
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_overrides(["rnn=gru", "lr0=0.003", "unit_kernel=3x5", "data_dir=/tmp/d", "seed=9"])
            .unwrap();
        let back = RunConfig::parse(&c.to_text(), "mem").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.train.seed, 9);
    }

    #[test]
    fn preset_goes_first() {
        let c = RunConfig::parse("depth = 4\npreset = ugnet128 # small\n\n", "mem").unwrap();
        assert_eq!(c.model.latent, 128);
        assert_eq!(c.model.rnn, RnnKind::Gru);
        assert_eq!(c.model.depth, 4);
    }

    #[test]
    fn unknown_keys_and_bad_values_name_the_line() {
        let err = RunConfig::parse("epochs = 3\nlearning_rate = 1\n", "run.cfg").unwrap_err();
        assert!(matches!(err, IoError::Config { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("learning_rate"));
        assert!(RunConfig::parse("epochs = three", "x").is_err());
        assert!(RunConfig::parse("just words", "x").is_err());
        assert!(RunConfig::default().apply_overrides(["norm=batch"]).is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let text = RunConfig::default().to_text();
        let written: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        for k in KEYS.iter().filter(|k| **k != "preset") {
            assert!(written.contains(k), "{k}");
        }
        assert_eq!(written.len() + 1, KEYS.len());
    }
}
