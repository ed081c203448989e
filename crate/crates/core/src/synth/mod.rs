//! Reverberant multi-microphone mixtures: image-method room responses,
//! synthetic speakers, mixing and dataset generation.

mod dataset;
mod mix;
mod rir;
mod room;
mod speaker;

pub use dataset::{make_dataset, plan_dataset, render, DatasetConfig, MixtureRecord, Split};
pub use mix::{active_spans, convolve, synthesize_mixture, MixOptions, Mixture, TargetKind};
pub use rir::{
    delay_samples, early_cutoff, generate_rir, generate_rir_with, image_rir, reflection_coefficient, schroeder_t60, split_rir, Rir,
    EARLY_WINDOW, TRUNCATION,
};
pub use room::{
    circular_array, distance, sample_scene, RoomSpec, SceneSpec, ARRAY_RADIUS, ARRAY_SIZE, MARGIN, SPEED_OF_SOUND,
};
pub use speaker::{speaker_pool, synthetic_pool, SyntheticSpeaker, Utterance};
