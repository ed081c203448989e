use alloc::collections::BTreeMap;
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{ConvSpec, RnnSpec, RESAMPLE_KERNEL};
use crate::rng::{seeded, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn insert(&mut self, name: String, tensor: Tensor<T>) -> Result<usize> {
        if self.index.contains_key(&name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.position(name).map(|i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            index: self.index.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub spec: ConvSpec,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormParams {
    pub gamma: usize,
    pub beta: usize,
}

/// Convolution followed by layer norm and PReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvStage {
    pub conv: ConvParams,
    pub norm: NormParams,
    pub prelu: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeftUnit {
    pub conv: ConvParams,
    pub down_weight: usize,
    pub down_bias: usize,
}

/// Bottom or right unit: conv stage, shared RNN, feed-forward, optional
/// upsampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecurrentUnit {
    pub level: usize,
    pub stage: ConvStage,
    pub rnn: RnnSpec,
    pub w_ih: usize,
    pub w_hh: usize,
    pub rnn_bias: usize,
    pub ff_weight: usize,
    pub ff_bias: usize,
    /// `(weight, bias)` of the upsampler.
    pub up: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UxBlock {
    pub left: Vec<LeftUnit>,
    pub bottom: RecurrentUnit,
    /// Right units in processing order (deepest first).
    pub right: Vec<RecurrentUnit>,
}

/// Parameter indices of every layer, in forward order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub encoder_norm: NormParams,
    pub encoder: usize,
    pub mixer: [ConvStage; 2],
    pub blocks: Vec<UxBlock>,
    pub decoder: usize,
}

/// How a parameter is initialised.
#[derive(Debug, Clone, Copy)]
enum Fill {
    /// Uniform on `±1/sqrt(fan_in)`.
    FanIn(usize),
    Constant(f64),
    /// Same kernel for every channel.
    Kernel([f64; RESAMPLE_KERNEL]),
}

struct Builder<'a, T: Scalar> {
    store: ParamStore<T>,
    rng: &'a mut Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn add(&mut self, name: String, shape: &[usize], fill: Fill) -> Result<usize> {
        let n: usize = shape.iter().product();
        let data = match fill {
            Fill::FanIn(fan) => {
                let a = 1.0 / Float::sqrt(fan as f64);
                (0..n).map(|_| T::of(self.rng.gen_range(-a..a))).collect()
            }
            Fill::Constant(c) => vec![T::of(c); n],
            Fill::Kernel(k) => (0..n).map(|i| T::of(k[i % RESAMPLE_KERNEL])).collect(),
        };
        let mut t = Tensor::from_vec(shape, data)?;
        t.set_requires_grad(true);
        self.store.insert(name, t)
    }

    fn conv(&mut self, prefix: &str, spec: ConvSpec) -> Result<ConvParams> {
        let shape = spec.weight_shape();
        let fan = shape[1] * shape[2] * shape[3];
        Ok(ConvParams {
            spec,
            weight: self.add(format!("{prefix}.weight"), &shape, Fill::FanIn(fan))?,
            bias: self.add(format!("{prefix}.bias"), &[spec.out_channels], Fill::Constant(0.0))?,
        })
    }

    fn norm(&mut self, prefix: &str, features: usize) -> Result<NormParams> {
        Ok(NormParams {
            gamma: self.add(format!("{prefix}.gamma"), &[features], Fill::Constant(1.0))?,
            beta: self.add(format!("{prefix}.beta"), &[features], Fill::Constant(0.0))?,
        })
    }

    fn stage(&mut self, prefix: &str, spec: ConvSpec, features: usize) -> Result<ConvStage> {
        Ok(ConvStage {
            conv: self.conv(&format!("{prefix}.conv"), spec)?,
            norm: self.norm(&format!("{prefix}.norm"), features)?,
            prelu: self.add(format!("{prefix}.prelu"), &[spec.out_channels], Fill::Constant(0.25))?,
        })
    }

    fn recurrent(&mut self, prefix: &str, cfg: &ModelConfig, level: usize, in_channels: usize, upsample: bool) -> Result<RecurrentUnit> {
        let c = cfg.sources;
        let r = cfg.resolution(level);
        let stage = self.stage(prefix, ConvSpec::new(in_channels, c, cfg.unit_kernel), r)?;
        let rnn = RnnSpec::new(cfg.rnn, r, r);
        let g = rnn.gate_width();
        let w_ih = self.add(format!("{prefix}.rnn.w_ih"), &[r, g], Fill::FanIn(r))?;
        let w_hh = self.add(format!("{prefix}.rnn.w_hh"), &[r, g], Fill::FanIn(r))?;
        let rnn_bias = self.add(format!("{prefix}.rnn.bias"), &[g], Fill::Constant(0.0))?;
        let ff_weight = self.add(format!("{prefix}.ff.weight"), &[r, r], Fill::FanIn(r))?;
        let ff_bias = self.add(format!("{prefix}.ff.bias"), &[r], Fill::Constant(0.0))?;
        let up = if upsample {
            // linear interpolation kernel
            let w = self.add(format!("{prefix}.up.weight"), &[c, 1, 1, RESAMPLE_KERNEL], Fill::Kernel([0.25, 0.75, 0.75, 0.25]))?;
            let b = self.add(format!("{prefix}.up.bias"), &[c], Fill::Constant(0.0))?;
            Some((w, b))
        } else {
            None
        };
        Ok(RecurrentUnit {
            level,
            stage,
            rnn,
            w_ih,
            w_hh,
            rnn_bias,
            ff_weight,
            ff_bias,
            up,
        })
    }
}

/// Creates freshly initialised parameters and their layout.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<(Layout, ParamStore<T>)> {
    cfg.validate()?;
    let mut rng = seeded(seed);
    let mut b = Builder {
        store: ParamStore::default(),
        rng: &mut rng,
    };
    let (m, c, n, l) = (cfg.in_channels, cfg.sources, cfg.latent, cfg.frame_len);

    let encoder_norm = b.norm("encoder.norm", l)?;
    let encoder = b.add("encoder.weight".into(), &[l, n], Fill::FanIn(l))?;
    let mixer = [
        b.stage("mixer.0", ConvSpec::new(m, m, cfg.mixer_kernel), n)?,
        b.stage("mixer.1", ConvSpec::new(m, c, cfg.mixer_kernel), n)?,
    ];
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for blk in 0..cfg.blocks {
        let mut left = Vec::with_capacity(cfg.depth);
        for d in 0..cfg.depth {
            let p = format!("blocks.{blk}.left.{d}");
            let spec = if cfg.channel_interaction {
                ConvSpec::new(c, c, cfg.unit_kernel)
            } else {
                ConvSpec::depthwise(c, cfg.unit_kernel)
            };
            let conv = b.conv(&format!("{p}.conv"), spec)?;
            let down_weight = b.add(format!("{p}.down.weight"), &[c, 1, 1, RESAMPLE_KERNEL], Fill::Kernel([0.25; 4]))?;
            let down_bias = b.add(format!("{p}.down.bias"), &[c], Fill::Constant(0.0))?;
            left.push(LeftUnit {
                conv,
                down_weight,
                down_bias,
            });
        }
        let bottom = b.recurrent(&format!("blocks.{blk}.bottom"), cfg, cfg.depth, c, true)?;
        let right = (0..cfg.depth)
            .rev()
            .map(|d| b.recurrent(&format!("blocks.{blk}.right.{d}"), cfg, d, 2 * c, d > 0))
            .collect::<Result<Vec<_>>>()?;
        blocks.push(UxBlock { left, bottom, right });
    }
    let decoder = b.add("decoder.weight".into(), &[n, l], Fill::FanIn(n))?;
    let layout = Layout {
        encoder_norm,
        encoder,
        mixer,
        blocks,
        decoder,
    };
    Ok((layout, b.store))
}

/// Checks that `store` holds exactly the parameters of `cfg` with the right
/// shapes and returns the layout together with the tensors in layout order.
pub fn arrange_params<T: Scalar>(cfg: &ModelConfig, mut store: ParamStore<T>) -> Result<(Layout, ParamStore<T>)> {
    let (layout, reference) = init_params::<T>(cfg, 0)?;
    if let Some(extra) = store.names().iter().find(|n| reference.get(n).is_none()) {
        return Err(Error::Parameter {
            name: extra.clone(),
            expected: "nothing".into(),
            found: format!("{:?}", store.get(extra).map(|t| t.shape().to_vec()).unwrap_or_default()),
        });
    }
    let mut arranged = ParamStore::default();
    for (name, t) in reference.iter() {
        let found = store.position(name).map(|i| core::mem::replace(&mut store.tensors[i], t.clone()));
        match found {
            Some(mut s) if s.shape() == t.shape() => {
                s.set_requires_grad(true);
                arranged.insert(name.into(), s)?;
            }
            other => {
                return Err(Error::Parameter {
                    name: name.into(),
                    expected: format!("{:?}", t.shape()),
                    found: other.map_or_else(|| "nothing".into(), |s| format!("{:?}", s.shape())),
                })
            }
        }
    }
    Ok((layout, arranged))
}
