use alloc::format;

use crate::error::{Error, Result};
use crate::framing::FrameSpec;
use crate::nn::{NormKind, RnnKind};

/// Network hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Microphone channels `M`.
    pub in_channels: usize,
    /// Separated sources `C`.
    pub sources: usize,
    /// Latent features `N`.
    pub latent: usize,
    /// Samples per frame `L`.
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    /// Number of left (and right) units per UX block.
    pub depth: usize,
    pub rnn: RnnKind,
    /// Stacked UX blocks.
    pub blocks: usize,
    pub norm: NormKind,
    /// Regular instead of depthwise convolution in the left units.
    pub channel_interaction: bool,
    /// `(k_t, k_f)` of the convolutions inside UX blocks.
    pub unit_kernel: (usize, usize),
    /// `(k_t, k_f)` of the mixer convolutions.
    pub mixer_kernel: (usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            sources: 2,
            latent: 256,
            frame_len: 16,
            hop: 8,
            sample_rate: 8000,
            depth: 5,
            rnn: RnnKind::Lstm,
            blocks: 1,
            norm: NormKind::Cumulative,
            channel_interaction: false,
            unit_kernel: (3, 3),
            mixer_kernel: (3, 3),
        }
    }
}

/// Named configurations: `ulnet256`, `ugnet256`, `ulnet128`, `ugnet128`,
/// `ulnet256x2`, `ulnet256x4` and the small `tiny`.
pub const PRESETS: [&str; 7] = ["ulnet256", "ugnet256", "ulnet128", "ugnet128", "ulnet256x2", "ulnet256x4", "tiny"];

impl ModelConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        let cfg = match name {
            "ulnet256" => base,
            "ugnet256" => Self { rnn: RnnKind::Gru, ..base },
            "ulnet128" => Self { latent: 128, ..base },
            "ugnet128" => Self {
                latent: 128,
                rnn: RnnKind::Gru,
                ..base
            },
            "ulnet256x2" => Self { blocks: 2, ..base },
            "ulnet256x4" => Self { blocks: 4, ..base },
            "tiny" => Self {
                latent: 32,
                depth: 3,
                ..base
            },
            other => return Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("sources", self.sources),
            ("latent", self.latent),
            ("frame_len", self.frame_len),
            ("hop", self.hop),
            ("blocks", self.blocks),
            ("unit kernel", self.unit_kernel.0.min(self.unit_kernel.1)),
            ("mixer kernel", self.mixer_kernel.0.min(self.mixer_kernel.1)),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if self.depth >= usize::BITS as usize || self.latent % (1 << self.depth) != 0 || self.latent >> self.depth < 1 {
            return Err(Error::InvalidConfig(format!(
                "latent size {} is not divisible by 2^{}",
                self.latent, self.depth
            )));
        }
        if self.unit_kernel.1 % 2 == 0 || self.mixer_kernel.1 % 2 == 0 {
            return Err(Error::InvalidConfig("feature kernel widths must be odd".into()));
        }
        self.frame_spec().validate()
    }

    pub fn frame_spec(&self) -> FrameSpec {
        FrameSpec {
            frame_len: self.frame_len,
            hop: self.hop,
            sample_rate: self.sample_rate,
        }
    }

    /// Feature resolution at UX level `level` (0 is full resolution).
    pub fn resolution(&self, level: usize) -> usize {
        self.latent >> level
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            ModelConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(ModelConfig::preset("nope").is_err());
    }

    #[test]
    fn rejects_indivisible_latent() {
        let cfg = ModelConfig {
            latent: 48,
            depth: 5,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            blocks: 0,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn depth_five_resolutions() {
        let cfg = ModelConfig::default();
        let levels: alloc::vec::Vec<usize> = (0..=5).map(|d| cfg.resolution(d)).collect();
        assert_eq!(levels, [256, 128, 64, 32, 16, 8]);
    }
}
