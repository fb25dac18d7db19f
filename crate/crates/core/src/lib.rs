//! Synthetic illumination-diversity experiments.
//!
//! The crate renders classification datasets under a controlled illumination
//! model, augments single-illumination data with gray-card vector mapping or
//! TPE-tuned color jitter, trains a small CNN, and reports how far each
//! augmentation closes the gap to genuinely diverse training data.

pub mod datasets;
pub mod graycal;
pub mod harness;
pub mod illumsim;
pub mod imagecore;
pub mod jitter;
pub mod par;
pub mod seeding;
pub mod tinynet;
pub mod tpe;

pub use imagecore::{Image, LabeledSample};
pub use illumsim::{ColorClass, IlluminationSetting, RenderOptions, SceneSpec};

/// Number of object classes in every dataset.
pub const NUM_CLASSES: usize = 10;
