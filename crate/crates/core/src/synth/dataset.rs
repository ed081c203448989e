//! Deterministic datasets of rendered mixtures.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;

use super::mix::{synthesize_mixture, MixOptions, Mixture, TargetKind};
use super::room::{sample_scene, SceneSpec};
use super::speaker::Utterance;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::train::Example;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
    /// Microphones per mixture.
    pub channels: usize,
    pub sources: usize,
    pub anechoic: bool,
    pub target: TargetKind,
    /// Seconds per mixture.
    pub duration: f64,
}

impl Default for DatasetConfig {
    /// 200 / 40 / 40 single-channel reverberant mixtures of 4 s.
    fn default() -> Self {
        Self {
            train: 200,
            val: 40,
            test: 40,
            seed: 0,
            channels: 1,
            sources: 2,
            anechoic: false,
            target: TargetKind::Reverberant,
            duration: 4.0,
        }
    }
}

impl DatasetConfig {
    pub fn mix_options(&self) -> MixOptions {
        MixOptions {
            channels: self.channels,
            target: self.target,
            anechoic: self.anechoic,
        }
    }

    pub fn len(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything needed to re-render one mixture from its pool.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRecord {
    pub split: Split,
    /// Position within the split.
    pub index: usize,
    pub scene: SceneSpec,
    /// Pool indices of the utterances, one per source.
    pub utterances: Vec<usize>,
}

/// Draws scenes and utterance pairings for every mixture. Each mixture uses
/// utterances of distinct speakers.
pub fn plan_dataset(cfg: &DatasetConfig, pool: &[Utterance]) -> Result<Vec<MixtureRecord>> {
    let mut speakers: Vec<usize> = pool.iter().map(|u| u.speaker).collect();
    speakers.sort_unstable();
    speakers.dedup();
    if speakers.len() < cfg.sources {
        return Err(Error::InsufficientPool {
            needed: cfg.sources,
            available: speakers.len(),
        });
    }
    let by_speaker: Vec<Vec<usize>> = speakers
        .iter()
        .map(|s| (0..pool.len()).filter(|&i| pool[i].speaker == *s).collect())
        .collect();
    let splits = [(Split::Train, cfg.train), (Split::Val, cfg.val), (Split::Test, cfg.test)];
    let mut records = Vec::with_capacity(cfg.len());
    for (split, count) in splits {
        for index in 0..count {
            let mut rng = substream(cfg.seed, records.len() as u64);
            let mut scene = sample_scene(rng.gen(), cfg.sources);
            scene.duration = cfg.duration;
            let chosen: Vec<&Vec<usize>> = by_speaker.choose_multiple(&mut rng, cfg.sources).collect();
            let utterances = chosen.iter().map(|u| *u.choose(&mut rng).expect("speaker has utterances")).collect();
            records.push(MixtureRecord {
                split,
                index,
                scene,
                utterances,
            });
        }
    }
    Ok(records)
}

pub fn render(record: &MixtureRecord, pool: &[Utterance], opts: &MixOptions) -> Result<Mixture> {
    let sources: Vec<Vec<f64>> = record.utterances.iter().map(|&i| pool[i].samples.clone()).collect();
    synthesize_mixture(&record.scene, &sources, opts)
}

/// Plans and renders a whole dataset.
pub fn make_dataset(cfg: &DatasetConfig, pool: &[Utterance]) -> Result<Vec<(MixtureRecord, Mixture)>> {
    let opts = cfg.mix_options();
    plan_dataset(cfg, pool)?
        .into_iter()
        .map(|r| render(&r, pool, &opts).map(|m| (r, m)))
        .collect()
}

impl Mixture {
    /// Training pair at precision `T`.
    pub fn example<T: Scalar>(&self) -> Example<T> {
        let cast = |v: &Vec<Vec<f64>>| v.iter().map(|x| x.iter().map(|&s| T::of(s)).collect()).collect();
        Example {
            mixture: cast(&self.channels),
            sources: cast(&self.targets),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::speaker::{speaker_pool, synthetic_pool};

    fn small() -> (DatasetConfig, Vec<Utterance>) {
        let cfg = DatasetConfig {
            train: 4,
            val: 2,
            test: 2,
            seed: 3,
            anechoic: true,
            duration: 0.25,
            ..Default::default()
        };
        (cfg, synthetic_pool(&speaker_pool(4, 1), 2, 2000, 1))
    }

    #[test]
    fn regeneration_is_identical() {
        let (cfg, pool) = small();
        let a = make_dataset(&cfg, &pool).unwrap();
        let b = make_dataset(&cfg, &pool).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let splits: Vec<_> = a.iter().map(|(r, _)| (r.split, r.index)).collect();
        assert_eq!(splits[4], (Split::Val, 0));
        assert_eq!(splits[7], (Split::Test, 1));
    }

    #[test]
    fn pairs_use_distinct_speakers() {
        let (cfg, pool) = small();
        for r in plan_dataset(&cfg, &pool).unwrap() {
            assert_ne!(pool[r.utterances[0]].speaker, pool[r.utterances[1]].speaker);
            assert_eq!(r.scene.duration, 0.25);
        }
    }

    #[test]
    fn channel_count_follows_the_config() {
        let (mut cfg, pool) = small();
        cfg.channels = 3;
        cfg.train = 1;
        let set = make_dataset(&cfg, &pool).unwrap();
        assert_eq!(set[0].1.channels.len(), 3);
        let ex = set[0].1.example::<f32>();
        assert_eq!((ex.mixture.len(), ex.sources.len()), (3, 2));
        assert_eq!(ex.mixture[0].len(), 2000);
    }

    #[test]
    fn small_pools_are_rejected() {
        let (cfg, _) = small();
        let pool = synthetic_pool(&speaker_pool(1, 1), 3, 100, 1);
        assert_eq!(
            plan_dataset(&cfg, &pool),
            Err(Error::InsufficientPool { needed: 2, available: 1 })
        );
    }
}
