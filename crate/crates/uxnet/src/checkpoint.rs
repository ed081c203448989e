//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "UXNT"  u16 version
//! config: u32 × 9 (M, C, N, L, hop, rate, D, blocks, unit k_t),
//!         u32 × 3 (unit k_f, mixer k_t, mixer k_f), u8 rnn, u8 norm, u8 interaction
//! u32 tensor count
//! per tensor: u32 name length, name (UTF-8), u32 rank, u32 × rank extents,
//!             f32 × product(extents)
//! u32 CRC-32 of every preceding byte
//! ```

use std::path::Path;

use uxnet_core::model::{Model, ModelConfig, ParamStore};
use uxnet_core::nn::{NormKind, RnnKind};
use uxnet_core::Tensor;

use crate::error::{IoError, Result};

pub const MAGIC: &[u8; 4] = b"UXNT";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>) -> Self {
        Self {
            config: *model.config(),
            params: model.params().clone(),
        }
    }

    /// Builds the stored model.
    pub fn into_model(self) -> Result<Model<f32>> {
        Ok(Model::from_params(self.config, self.params)?)
    }

    /// Builds a model for `config`, failing on the first parameter whose
    /// name or shape does not fit it.
    pub fn into_model_for(self, config: &ModelConfig) -> Result<Model<f32>> {
        Ok(Model::from_params(*config, self.params)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(64 + 4 * self.params.scalar_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let words = [
            c.in_channels,
            c.sources,
            c.latent,
            c.frame_len,
            c.hop,
            c.sample_rate as usize,
            c.depth,
            c.blocks,
            c.unit_kernel.0,
            c.unit_kernel.1,
            c.mixer_kernel.0,
            c.mixer_kernel.1,
        ];
        for w in words {
            put_u32(&mut out, w);
        }
        out.push(match c.rnn {
            RnnKind::Lstm => 0,
            RnnKind::Gru => 1,
        });
        out.push(match c.norm {
            NormKind::Cumulative => 0,
            NormKind::Framewise => 1,
        });
        out.push(u8::from(c.channel_interaction));
        put_u32(&mut out, self.params.len());
        for (name, t) in self.params.iter() {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank());
            for &e in t.shape() {
                put_u32(&mut out, e);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses and verifies magic, checksum, version and tensor shapes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(IoError::Magic);
        }
        if bytes.len() < 10 {
            return Err(IoError::Truncated(bytes.len()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(IoError::Checksum { stored, computed });
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("two bytes"));
        if version != VERSION {
            return Err(IoError::Version(version));
        }
        let mut w = [0usize; 12];
        for slot in &mut w {
            *slot = r.u32()?;
        }
        let rnn = match r.take(1)?[0] {
            0 => RnnKind::Lstm,
            1 => RnnKind::Gru,
            k => return Err(IoError::Corrupt(format!("unknown recurrent kind {k}"))),
        };
        let norm = match r.take(1)?[0] {
            0 => NormKind::Cumulative,
            1 => NormKind::Framewise,
            k => return Err(IoError::Corrupt(format!("unknown norm kind {k}"))),
        };
        let channel_interaction = match r.take(1)?[0] {
            0 => false,
            1 => true,
            k => return Err(IoError::Corrupt(format!("bad flag {k}"))),
        };
        let config = ModelConfig {
            in_channels: w[0],
            sources: w[1],
            latent: w[2],
            frame_len: w[3],
            hop: w[4],
            sample_rate: w[5] as u32,
            depth: w[6],
            blocks: w[7],
            unit_kernel: (w[8], w[9]),
            mixer_kernel: (w[10], w[11]),
            rnn,
            norm,
            channel_interaction,
        };
        config.validate()?;
        let count = r.u32()?;
        let mut params = ParamStore::default();
        for _ in 0..count {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| IoError::Corrupt("tensor name is not UTF-8".into()))?
                .to_owned();
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e));
            let n = n.ok_or_else(|| IoError::Corrupt(format!("{name}: extents overflow")))?;
            let raw = r.take(n.checked_mul(4).ok_or(IoError::Truncated(r.pos))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("four bytes")))
                .collect();
            params.insert(name, Tensor::from_vec(&shape, data)?)?;
        }
        if r.pos != body.len() {
            return Err(IoError::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| IoError::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| IoError::file(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint fields fit in 32 bits");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(IoError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")) as usize)
    }
}
