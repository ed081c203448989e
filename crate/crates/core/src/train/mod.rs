//! SI-SNR objective, permutation-invariant loss, Adam and the training loop.

mod assign;
mod metric;
mod optim;
mod pit;

pub use assign::{assignment_cost, hungarian_assign};
pub use metric::{si_snr, si_snr_grad, si_snri, SiSnrOptions};
pub use optim::{adam_update, clip_gradients, lr_schedule, OptimState};
pub use pit::{cost_matrix, pit_loss};

use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::autograd::Tape;
use crate::error::{shape_err, Error, Result};
use crate::framing::{frame_signal, FrameSpec};
use crate::model::{Model, ParamStore};
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Gradients are clamped to `[-clip, clip]`.
    pub clip: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub si_snr: SiSnrOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            lr0: 1e-3,
            lr_decay: 0.98,
            decay_every: 2,
            clip: 5.0,
            seed: 0,
            si_snr: SiSnrOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.decay_every > 0
            && self.lr0 > 0.0
            && self.lr_decay > 0.0
            && self.clip > 0.0;
        if !ok {
            return Err(Error::InvalidConfig("training settings must be positive".into()));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        lr_schedule(self.lr0, self.lr_decay, self.decay_every, epoch)
    }
}

/// One training pair: `M` mixture channels and `C` target waveforms, all of
/// the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub mixture: Vec<Vec<T>>,
    pub sources: Vec<Vec<T>>,
}

/// An example cut to whole frames, ready for the tape.
struct Prepared<T> {
    frames: Tensor<T>,
    refs: Tensor<T>,
    reference_mix: Vec<T>,
}

impl<T: Scalar> Example<T> {
    fn prepare(&self, model: &Model<T>) -> Result<Prepared<T>> {
        let cfg = model.config();
        if self.mixture.len() != cfg.in_channels {
            return Err(shape_err("example mixture", &[cfg.in_channels], &[self.mixture.len()]));
        }
        if self.sources.len() != cfg.sources {
            return Err(shape_err("example sources", &[cfg.sources], &[self.sources.len()]));
        }
        let len = self.mixture[0].len();
        if let Some(bad) = self.mixture.iter().chain(&self.sources).find(|c| c.len() != len) {
            return Err(shape_err("example", &[len], &[bad.len()]));
        }
        let spec: FrameSpec = cfg.frame_spec();
        if len < spec.frame_len {
            return Err(Error::EmptyInput("example shorter than one frame"));
        }
        let k = spec.frame_count(len);
        let n = spec.output_len(k);
        let mut frames = Vec::with_capacity(cfg.in_channels * k * spec.frame_len);
        for ch in &self.mixture {
            frames.extend(frame_signal(ch, &spec)?.into_data());
        }
        let refs: Vec<T> = self.sources.iter().flat_map(|s| s[..n].iter().copied()).collect();
        Ok(Prepared {
            frames: Tensor::from_vec(&[cfg.in_channels, k, spec.frame_len], frames)?,
            refs: Tensor::from_vec(&[cfg.sources, n], refs)?,
            reference_mix: self.mixture[0][..n].to_vec(),
        })
    }
}

/// Per-example scores on an evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean PIT loss (negative SI-SNR, dB).
    pub loss: f64,
    /// Mean SI-SNR improvement over the reference-channel mixture, dB.
    pub si_snri: f64,
}

/// PIT loss and SI-SNRi of `model` on `examples`, without gradients.
pub fn evaluate<T: Scalar>(model: &Model<T>, examples: &[Example<T>], opts: &SiSnrOptions) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let (mut loss, mut gain) = (0.0, 0.0);
    for ex in examples {
        let p = ex.prepare(model)?;
        let est = model.forward_offline(&p.frames)?;
        let n = p.reference_mix.len();
        let est = Tensor::from_vec(&[est.len(), n], est.concat())?;
        let cost = cost_matrix(&est, &p.refs, opts)?;
        let perm = hungarian_assign(&cost)?;
        loss += assignment_cost(&cost, &perm) / perm.len() as f64;
        let mut g = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            let r = &p.refs.data()[j * n..(j + 1) * n];
            g += -cost[i][j] - si_snr(&p.reference_mix, r, opts)?;
        }
        gain += g / perm.len() as f64;
    }
    let count = examples.len() as f64;
    Ok(Evaluation {
        loss: loss / count,
        si_snri: gain / count,
    })
}

/// One progress record. Batch records carry `val_loss: None`; the record
/// closing an epoch carries the epoch's mean training loss and its
/// validation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

/// Result of [`Trainer::fit`].
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the epoch with the lowest validation loss.
    pub best: ParamStore<T>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// One end-of-epoch record per epoch.
    pub history: Vec<Progress>,
}

/// Index of the smallest finite loss; the earliest one wins ties.
pub fn select_best(losses: &[f64]) -> Option<usize> {
    losses
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .fold(None, |best: Option<(usize, f64)>, (i, &l)| match best {
            Some((_, b)) if b <= l => best,
            _ => Some((i, l)),
        })
        .map(|(i, _)| i)
}

pub struct Trainer<T: Scalar> {
    pub config: TrainConfig,
    pub optim: OptimState<T>,
    epoch: usize,
    batch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: &Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            optim: OptimState::new(model.params().tensors(), config.lr0),
            config,
            epoch: 0,
            batch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Forward, PIT loss and backward on every example of `batch`, then one
    /// clipped Adam step on the averaged gradients. Returns the mean loss.
    pub fn step(&mut self, model: &mut Model<T>, batch: &[&Example<T>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let diverged = Error::Diverged {
            epoch: self.epoch,
            batch: self.batch,
        };
        model.params_mut().tensors_mut().iter_mut().for_each(Tensor::zero_grad);
        let weight = T::of(1.0 / batch.len() as f64);
        let mut total = 0.0;
        for ex in batch {
            let p = ex.prepare(model)?;
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let x = tape.constant(p.frames);
            let trace = model.graph(&vars).forward(&mut tape, x).map_err(|_| diverged.clone())?;
            if tape.check_finite().is_err() {
                return Err(diverged);
            }
            let (loss, _) = pit_loss(&mut tape, trace.waveforms, &p.refs, &self.config.si_snr)?;
            let value = tape.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(diverged);
            }
            total += value;
            let scaled = tape.scale(loss, weight);
            let grads = tape.backward(scaled).map_err(|_| diverged.clone())?;
            for (v, t) in vars.iter().zip(model.params_mut().tensors_mut()) {
                grads.accumulate_into(*v, t)?;
            }
        }
        let params = model.params_mut().tensors_mut();
        if params.iter().any(|p| p.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite()))) {
            return Err(diverged);
        }
        clip_gradients(params, self.config.clip);
        self.optim.lr = self.config.lr(self.epoch);
        adam_update(params, &mut self.optim)?;
        self.batch += 1;
        Ok(total / batch.len() as f64)
    }

    /// Runs `config.epochs` epochs of shuffled mini-batches, validating after
    /// each one. The model is left with the best-validation parameters. An
    /// empty `val` set falls back to the training loss for selection.
    pub fn fit(
        &mut self,
        model: &mut Model<T>,
        train: &[Example<T>],
        val: &[Example<T>],
        mut on_progress: impl FnMut(&Progress),
    ) -> Result<TrainOutcome<T>> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        let mut history = Vec::with_capacity(self.config.epochs);
        let mut best: Option<(usize, f64, ParamStore<T>)> = None;
        for _ in 0..self.config.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut substream(self.config.seed, self.epoch as u64));
            self.batch = 0;
            let mut sum = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &train[i]).collect();
                let loss = self.step(model, &batch)?;
                sum += loss * chunk.len() as f64;
                on_progress(&Progress {
                    epoch: self.epoch,
                    step: self.optim.step,
                    loss,
                    val_loss: None,
                    lr: self.optim.lr,
                });
            }
            let loss = sum / train.len() as f64;
            let val_loss = if val.is_empty() {
                loss
            } else {
                evaluate(model, val, &self.config.si_snr)?.loss
            };
            let record = Progress {
                epoch: self.epoch,
                step: self.optim.step,
                loss,
                val_loss: Some(val_loss),
                lr: self.optim.lr,
            };
            on_progress(&record);
            history.push(record);
            if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
                best = Some((self.epoch, val_loss, model.params().clone()));
            }
            self.epoch += 1;
        }
        let (best_epoch, best_val_loss, params) = best.expect("at least one epoch ran");
        *model = Model::from_params(*model.config(), params.clone())?;
        Ok(TrainOutcome {
            best: params,
            best_epoch,
            best_val_loss,
            history,
        })
    }
}

#[cfg(test)]
mod tests;
