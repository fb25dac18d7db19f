//! Small convolutional classifier trained from scratch with Adam.
//!
//! ```text
//! input 3xSxS -> conv3x3(8) -> ReLU -> maxpool2
//!             -> conv3x3(16) -> ReLU -> maxpool2
//!             -> dense(16*(S/4)^2 -> 10)
//! ```
//!
//! A linear (multinomial logistic) model on raw pixels is available as a
//! second architecture.

mod checkpoint;
mod metrics;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{evaluate, EvalMetrics};
pub use model::{cross_entropy, Architecture, Model, Normalization, Tensor};
pub use train::{loss_history_csv, train, Augment, EpochRecord, TrainConfig, TrainError, TrainOutcome};
