//! Synthetic datasets on disk: one directory per split holding float WAVs,
//! plus a `manifest.jsonl` with one record per mixture.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uxnet_core::synth::{make_dataset, speaker_pool, synthetic_pool, DatasetConfig, Split};
use uxnet_core::train::Example;

use crate::error::{IoError, Result};
use crate::wav::{read_wav, write_wav, WavFormat};

pub const MANIFEST: &str = "manifest.jsonl";

/// Largest absolute sample written; mixtures and targets share one scale.
const PEAK: f64 = 0.9;

/// Source material for [`write_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolConfig {
    pub speakers: usize,
    pub per_speaker: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            speakers: 20,
            per_speaker: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: String,
    pub index: usize,
    /// Relative to the dataset root.
    pub mixture: PathBuf,
    pub targets: Vec<PathBuf>,
    pub sample_rate: u32,
    pub samples: usize,
    pub room: [f64; 3],
    pub t60: f64,
    pub overlap_ratio: f64,
    pub snr_db: f64,
    pub speakers: Vec<usize>,
    /// Factor applied to the rendered signals before writing.
    pub scale: f64,
}

/// Renders `cfg` from a synthetic speaker pool and writes it under `root`.
pub fn write_dataset(root: &Path, cfg: &DatasetConfig, pool_cfg: &PoolConfig) -> Result<Vec<ManifestEntry>> {
    let sample_rate = 8000u32;
    let samples = (cfg.duration * f64::from(sample_rate)).round() as usize;
    let speakers = speaker_pool(pool_cfg.speakers, cfg.seed);
    let pool = synthetic_pool(&speakers, pool_cfg.per_speaker, samples, cfg.seed.wrapping_add(1));
    let rendered = make_dataset(cfg, &pool)?;
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| IoError::file(p, e));
    mkdir(root)?;
    let manifest_path = root.join(MANIFEST);
    let file = File::create(&manifest_path).map_err(|e| IoError::file(&manifest_path, e))?;
    let mut manifest = BufWriter::new(file);
    let mut entries = Vec::with_capacity(rendered.len());
    for (record, mix) in rendered {
        let split = record.split.name();
        mkdir(&root.join(split))?;
        let peak = mix
            .channels
            .iter()
            .chain(&mix.targets)
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > PEAK { PEAK / peak } else { 1.0 };
        let to_f32 = |v: &[Vec<f64>]| -> Vec<Vec<f32>> {
            v.iter().map(|x| x.iter().map(|&s| (s * scale) as f32).collect()).collect()
        };
        let stem = format!("{split}/{:05}", record.index);
        let mixture = PathBuf::from(format!("{stem}_mix.wav"));
        write_wav(&root.join(&mixture), &to_f32(&mix.channels), sample_rate, WavFormat::Float32)?;
        let mut targets = Vec::with_capacity(mix.targets.len());
        for (k, t) in to_f32(&mix.targets).into_iter().enumerate() {
            let path = PathBuf::from(format!("{stem}_s{k}.wav"));
            write_wav(&root.join(&path), &[t], sample_rate, WavFormat::Float32)?;
            targets.push(path);
        }
        let entry = ManifestEntry {
            split: split.into(),
            index: record.index,
            mixture,
            targets,
            sample_rate,
            samples,
            room: record.scene.room.dims(),
            t60: record.scene.room.t60,
            overlap_ratio: record.scene.overlap_ratio,
            snr_db: record.scene.snr_db,
            speakers: record.utterances.iter().map(|&u| pool[u].speaker).collect(),
            scale,
        };
        let line = serde_json::to_string(&entry).expect("manifest entries serialize");
        writeln!(manifest, "{line}").map_err(|e| IoError::file(&manifest_path, e))?;
        entries.push(entry);
    }
    manifest.flush().map_err(|e| IoError::file(&manifest_path, e))?;
    Ok(entries)
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>> {
    let path = root.join(MANIFEST);
    let file = File::open(&path).map_err(|e| IoError::file(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::file(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|source| IoError::Manifest {
            path: path.clone(),
            line: i + 1,
            source,
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Loads every example of `split`, in index order.
pub fn load_split(root: &Path, split: Split, sample_rate: u32) -> Result<Vec<Example<f32>>> {
    let mut entries: Vec<ManifestEntry> = read_manifest(root)?
        .into_iter()
        .filter(|e| e.split == split.name())
        .collect();
    entries.sort_by_key(|e| e.index);
    entries
        .iter()
        .map(|e| {
            let mixture = read_wav(&root.join(&e.mixture), Some(sample_rate))?.channels;
            let mut sources = Vec::with_capacity(e.targets.len());
            for t in &e.targets {
                let mut audio = read_wav(&root.join(t), Some(sample_rate))?;
                sources.push(audio.channels.swap_remove(0));
            }
            Ok(Example { mixture, sources })
        })
        .collect()
}
