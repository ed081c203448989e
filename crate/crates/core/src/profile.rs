//! Parameter and per-frame operation counts.
//!
//! Convention: one multiply-accumulate is 2 FLOPs and every other
//! elementwise operation is 1. Per element, layer norm costs
//! [`NORM_OPS`], an LSTM hidden unit [`LSTM_OPS`] and a GRU hidden unit
//! [`GRU_OPS`] pointwise operations on top of their matrix products.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::Result;
use crate::model::{ModelConfig, ParamStore};
use crate::nn::RnnKind;

/// Statistics (2), normalisation (2) and affine (2).
pub const NORM_OPS: u64 = 6;
/// Gate sums and biases (8), activations (5), cell (3) and output (1).
pub const LSTM_OPS: u64 = 17;
/// Gate sums and biases (6), activations (3), reset product (1) and
/// interpolation (4).
pub const GRU_OPS: u64 = 14;

/// Cost of one named unit for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitCost {
    pub name: String,
    pub params: usize,
    pub macs: u64,
    pub pointwise: u64,
}

impl UnitCost {
    pub fn ffpf(&self) -> u64 {
        2 * self.macs + self.pointwise
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub config: ModelConfig,
    /// Units in forward order.
    pub units: Vec<UnitCost>,
}

/// Top-level submodule of a unit name: `encoder`, `mixer`, `blocks.<b>`,
/// `masks` or `decoder`.
pub fn submodule(unit: &str) -> &str {
    let mut dots = unit.match_indices('.').map(|(i, _)| i);
    if unit.starts_with("blocks.") {
        dots.nth(1).map_or(unit, |i| &unit[..i])
    } else {
        dots.next().map_or(unit, |i| &unit[..i])
    }
}

/// Unit a parameter belongs to: `mixer.1.norm.gamma` → `mixer.1`,
/// `blocks.0.left.2.down.weight` → `blocks.0.left.2`.
pub fn unit_of(param: &str) -> &str {
    let parts: Vec<&str> = param.split('.').collect();
    let keep = match parts[0] {
        "blocks" if parts.get(2) == Some(&"bottom") => 3,
        "blocks" => 4,
        "mixer" => 2,
        _ => 1,
    };
    let end = parts.iter().take(keep.min(parts.len())).map(|p| p.len() + 1).sum::<usize>() - 1;
    &param[..end]
}

/// Trainable scalars per unit, in first-seen order.
pub fn count_parameters<T>(params: &ParamStore<T>) -> Vec<(String, usize)>
where
    T: crate::scalar::Scalar,
{
    let mut groups: Vec<(String, usize)> = Vec::new();
    for (name, t) in params.iter() {
        let unit = unit_of(name);
        match groups.iter_mut().find(|(n, _)| n == unit) {
            Some((_, count)) => *count += t.len(),
            None => groups.push((unit.into(), t.len())),
        }
    }
    groups
}

/// `(macs, pointwise)` of a bias-free or biased dense map applied once.
pub fn linear_cost(inputs: usize, outputs: usize, bias: bool) -> (u64, u64) {
    ((inputs * outputs) as u64, if bias { outputs as u64 } else { 0 })
}

struct Counter {
    units: Vec<UnitCost>,
}

impl Counter {
    fn unit(&mut self, name: String) -> &mut UnitCost {
        self.units.push(UnitCost {
            name,
            params: 0,
            macs: 0,
            pointwise: 0,
        });
        self.units.last_mut().expect("just pushed")
    }
}

fn add(u: &mut UnitCost, (macs, pointwise): (u64, u64)) {
    u.macs += macs;
    u.pointwise += pointwise;
}

/// Conv over `features` with `c_in → c_out`, `groups`, kernel `k`, plus bias.
fn conv(c_in: usize, c_out: usize, groups: usize, k: (usize, usize), features: usize) -> (u64, u64) {
    let outputs = (c_out * features) as u64;
    (outputs * ((c_in / groups) * k.0 * k.1) as u64, outputs)
}

/// Conv stage: conv, norm and PReLU.
fn stage(c_in: usize, c_out: usize, k: (usize, usize), features: usize) -> (u64, u64) {
    let (macs, pw) = conv(c_in, c_out, 1, k, features);
    let elems = (c_out * features) as u64;
    (macs, pw + elems * NORM_OPS + elems)
}

fn recurrent(cfg: &ModelConfig, u: &mut UnitCost, c_in: usize, level: usize, upsample: bool) {
    let c = cfg.sources;
    let r = cfg.resolution(level);
    add(u, stage(c_in, c, cfg.unit_kernel, r));
    let (gates, ops) = match cfg.rnn {
        RnnKind::Lstm => (4, LSTM_OPS),
        RnnKind::Gru => (3, GRU_OPS),
    };
    let per_channel = ((gates * r * (r + r)) as u64, ops * r as u64);
    add(u, (per_channel.0 * c as u64, per_channel.1 * c as u64));
    let ff = linear_cost(r, r, true);
    add(u, (ff.0 * c as u64, ff.1 * c as u64));
    if upsample {
        // transposed 1x4 kernel, stride 2: every input feeds 4 outputs
        add(u, ((c * r * 4) as u64, (c * 2 * r) as u64));
    }
}

/// Analytic operation counts for one frame of `cfg`.
pub fn count_ffpf(cfg: &ModelConfig) -> Result<Vec<UnitCost>> {
    cfg.validate()?;
    let (m, c, n, l) = (cfg.in_channels, cfg.sources, cfg.latent, cfg.frame_len);
    let mut k = Counter { units: Vec::new() };

    let enc = k.unit("encoder".into());
    add(enc, ((m * l * n) as u64, (m * l) as u64 * NORM_OPS + (m * n) as u64));
    let mix0 = k.unit("mixer.0".into());
    add(mix0, stage(m, m, cfg.mixer_kernel, n));
    let mix1 = k.unit("mixer.1".into());
    add(mix1, stage(m, c, cfg.mixer_kernel, n));

    for b in 0..cfg.blocks {
        for d in 0..cfg.depth {
            let r = cfg.resolution(d);
            let u = k.unit(format!("blocks.{b}.left.{d}"));
            let groups = if cfg.channel_interaction { 1 } else { c };
            add(u, conv(c, c, groups, cfg.unit_kernel, r));
            add(u, ((c * (r / 2) * 4) as u64, (c * r / 2) as u64));
        }
        let u = k.unit(format!("blocks.{b}.bottom"));
        recurrent(cfg, u, c, cfg.depth, true);
        for d in (0..cfg.depth).rev() {
            let u = k.unit(format!("blocks.{b}.right.{d}"));
            recurrent(cfg, u, 2 * c, d, d > 0);
        }
    }

    // residual adds, sigmoid and the mask product
    let masks = k.unit("masks".into());
    add(masks, (0, (cfg.blocks * c * n + 2 * c * n) as u64));
    let dec = k.unit("decoder".into());
    add(dec, ((c * n * l) as u64, (c * l) as u64));
    Ok(k.units)
}

/// Operations for `frames` frames: `frames` times the per-frame count.
pub fn count_sequence(cfg: &ModelConfig, frames: usize) -> Result<u64> {
    Ok(count_ffpf(cfg)?.iter().map(UnitCost::ffpf).sum::<u64>() * frames as u64)
}

impl ComplexityReport {
    /// Combines operation counts for `config` with the parameter counts of
    /// `params`.
    pub fn new<T: crate::scalar::Scalar>(config: &ModelConfig, params: &ParamStore<T>) -> Result<Self> {
        let mut units = count_ffpf(config)?;
        for (name, count) in count_parameters(params) {
            match units.iter_mut().find(|u| u.name == name) {
                Some(u) => u.params += count,
                None => units.push(UnitCost {
                    name,
                    params: count,
                    macs: 0,
                    pointwise: 0,
                }),
            }
        }
        Ok(Self { config: *config, units })
    }

    pub fn total_params(&self) -> usize {
        self.units.iter().map(|u| u.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.units.iter().map(|u| u.macs).sum()
    }

    pub fn ffpf(&self) -> u64 {
        self.units.iter().map(UnitCost::ffpf).sum()
    }

    /// `(params, ffpf)` per submodule, in forward order.
    pub fn submodules(&self) -> Vec<(String, usize, u64)> {
        let mut out: Vec<(String, usize, u64)> = Vec::new();
        for u in &self.units {
            let key = submodule(&u.name);
            match out.iter_mut().find(|(k, _, _)| k == key) {
                Some(e) => {
                    e.1 += u.params;
                    e.2 += u.ffpf();
                }
                None => out.push((key.into(), u.params, u.ffpf())),
            }
        }
        out
    }

    /// Hierarchical `key: value` text.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "config: M={} C={} N={} L={} hop={} D={} rnn={:?} blocks={} norm={:?}",
            c.in_channels, c.sources, c.latent, c.frame_len, c.hop, c.depth, c.rnn, c.blocks, c.norm
        );
        let _ = writeln!(s, "parameters: {}", self.total_params());
        let _ = writeln!(s, "ffpf: {}", self.ffpf());
        let _ = writeln!(s, "macs: {}", self.total_macs());
        for (name, params, ffpf) in self.submodules() {
            let _ = writeln!(s, "{name}:");
            let _ = writeln!(s, "  parameters: {params}");
            let _ = writeln!(s, "  ffpf: {ffpf}");
            for u in self.units.iter().filter(|u| submodule(&u.name) == name && u.name != name) {
                let _ = writeln!(s, "  {}: parameters={} ffpf={}", u.name, u.params, u.ffpf());
            }
        }
        s
    }
}
