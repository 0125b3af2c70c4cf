//! A compact encoder-decoder transformer trained from scratch with a
//! Prefix-LM objective: cross-entropy on the y-token response only.
//!
//! The tensor core is generic over f32/f64 — f32 for training speed, f64 for
//! the finite-difference gradient checks — with manual backprop throughout.

mod checkpoint;
mod params;
mod train;
mod transformer;

pub use checkpoint::{LMCheckpoint, Manifest};
pub use params::{Params, Scalar};
pub use train::{
    finetune, hash_studies, init_model, pretrain, single_task_train, study_pairs, LrSchedule,
    TrainConfig, TrainMode, TrainReport,
};
pub use transformer::{prefix_lm_loss, Batch, Model, TransformerConfig};
