//! Supervised training of the occupancy network.
//!
//! The loop is minibatch Adam over per-query cross-entropy: each step
//! draws a fixed-size query subset per cloud, runs the taped forward and
//! backward passes per cloud in parallel, reduces gradients in batch
//! order, and applies one serialized optimizer update. Every random
//! choice derives from the config seed and loop counters, so identical
//! seeds give bitwise-identical parameter trajectories, logs (modulo
//! wall-clock fields), and checkpoints.

mod checkpoint;
mod optimizer;
mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optimizer::{visit_tensors, visit_tensors_mut, AdamConfig, AdamState};
pub use run::{
    evaluate_classifier, evaluate_classifier_sampled, frozen_batch_loss, train, TrainConfig,
    TrainLogEntry, TrainOptions, TrainState,
};
