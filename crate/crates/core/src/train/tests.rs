use super::*;
use crate::model::ModelConfig;
use crate::rng::substream;
use alloc::vec;
use rand::Rng;

/// Two sinusoids in separate bands, summed into one channel.
pub(crate) fn two_tone(seed: u64, len: usize) -> Example<f32> {
    let mut rng = substream(seed, 0);
    let mut tone = |lo: f64, hi: f64| {
        let f = rng.gen_range(lo..hi) / 8000.0;
        let a = rng.gen_range(0.3..1.0);
        let phase = rng.gen_range(0.0..core::f64::consts::TAU);
        (0..len)
            .map(|n| (a * (core::f64::consts::TAU * f * n as f64 + phase).sin()) as f32)
            .collect::<Vec<f32>>()
    };
    let low = tone(150.0, 500.0);
    let high = tone(1200.0, 3000.0);
    let mix = low.iter().zip(&high).map(|(a, b)| a + b).collect();
    Example {
        mixture: vec![mix],
        sources: vec![low, high],
    }
}

fn tiny() -> ModelConfig {
    ModelConfig::preset("tiny").unwrap()
}

#[test]
fn best_index_of_a_loss_curve() {
    assert_eq!(select_best(&[3.0, 2.0, 2.5, 1.5, 1.7]), Some(3));
    assert_eq!(select_best(&[1.0, f64::NAN, 1.0, 0.5, 0.5]), Some(3));
    assert_eq!(select_best(&[f64::NAN]), None);
    assert_eq!(select_best(&[]), None);
}

#[test]
fn examples_are_cut_to_whole_frames() {
    let model = Model::<f32>::new(tiny(), 0).unwrap();
    let ex = two_tone(1, 100);
    let p = ex.prepare(&model).unwrap();
    // 100 samples hold 11 frames covering 96 samples
    assert_eq!(p.frames.shape(), [1, 11, 16]);
    assert_eq!(p.refs.shape(), [2, 96]);
    let short = two_tone(1, 10);
    assert!(short.prepare(&model).is_err());
    let mut ragged = ex.clone();
    ragged.sources[1].pop();
    assert!(ragged.prepare(&model).is_err());
}

#[test]
fn every_parameter_is_updated_by_one_step() {
    let mut model = Model::<f32>::new(tiny(), 4).unwrap();
    let before = model.params().clone();
    let mut trainer = Trainer::new(&model, TrainConfig::default()).unwrap();
    let ex = two_tone(2, 400);
    trainer.step(&mut model, &[&ex]).unwrap();
    let changed: usize = before
        .tensors()
        .iter()
        .zip(model.params().tensors())
        .map(|(a, b)| a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count())
        .sum();
    assert_eq!(changed, model.params().scalar_count());
}

#[test]
fn divergence_names_the_batch() {
    let mut model = Model::<f32>::new(tiny(), 4).unwrap();
    let mut trainer = Trainer::new(&model, TrainConfig::default()).unwrap();
    let ex = two_tone(2, 200);
    trainer.step(&mut model, &[&ex]).unwrap();
    model.params_mut().get_mut("decoder.weight").unwrap().data_mut()[0] = f32::NAN;
    assert_eq!(
        trainer.step(&mut model, &[&ex]),
        Err(Error::Diverged { epoch: 0, batch: 1 })
    );
}

#[test]
fn fit_is_deterministic_and_keeps_the_best_epoch() {
    let train: Vec<_> = (0..6).map(|i| two_tone(i, 320)).collect();
    let val: Vec<_> = (10..12).map(|i| two_tone(i, 320)).collect();
    let cfg = TrainConfig {
        epochs: 3,
        lr0: 3e-3,
        seed: 9,
        ..Default::default()
    };
    let run = || {
        let mut model = Model::<f32>::new(tiny(), 1).unwrap();
        let mut records = Vec::new();
        let out = Trainer::new(&model, cfg).unwrap().fit(&mut model, &train, &val, |p| records.push(*p)).unwrap();
        (model, out, records)
    };
    let (model, out, records) = run();
    let (model2, _, records2) = run();
    assert_eq!(model.params(), model2.params());
    assert_eq!(records, records2);
    // two batches per epoch plus one epoch record
    assert_eq!(records.len(), 9);
    let vals: Vec<f64> = out.history.iter().map(|r| r.val_loss.unwrap()).collect();
    assert_eq!(Some(out.best_epoch), select_best(&vals));
    assert_eq!(out.best_val_loss, vals[out.best_epoch]);
    let eval = evaluate(&model, &val, &cfg.si_snr).unwrap();
    assert!((eval.loss - out.best_val_loss).abs() < 1e-9);
}

#[test]
fn training_loss_decreases() {
    let train: Vec<_> = (0..16).map(|i| two_tone(i, 800)).collect();
    let cfg = TrainConfig {
        epochs: 5,
        lr0: 3e-3,
        ..Default::default()
    };
    let mut model = Model::<f32>::new(tiny(), 2).unwrap();
    let out = Trainer::new(&model, cfg).unwrap().fit(&mut model, &train, &[], |_| {}).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|r| r.loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}
