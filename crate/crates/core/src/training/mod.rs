//! Progressive-resizing training: schedule, optimizer, augmentation,
//! checkpoints and the epoch loop.

mod augment;
mod checkpoint;
mod schedule;
mod sgd;
mod trainer;

pub use augment::{augment, resize_labels, resize_pair, resize_pair_to, AugmentConfig};
pub use checkpoint::{Checkpoint, RngState, FORMAT_VERSION};
pub use schedule::{poly_lr, theoretical_cost_factor, Stage, TrainSchedule};
pub use sgd::{sgd_step, Sgd};
pub use trainer::{batches_per_epoch, train, EpochRecord, Trainer, TrainingReport};
