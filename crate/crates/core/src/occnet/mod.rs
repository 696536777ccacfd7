//! The occupancy network: a U-shaped stack of dual-restriction point
//! convolutions whose per-query side outputs feed a small classifier.
//!
//! Given a point cloud and a batch of query positions, the network
//! predicts for each query the probability that it lies inside the solid
//! the cloud was sampled from. Surface reconstruction then reduces to
//! extracting the 0.5 iso-surface of the predicted occupancy field.

mod config;
mod forward;
mod params;

pub use config::{BlockConfig, NetworkConfig};
pub use forward::{
    classify_probabilities, evaluate_taped, forward, loss, loss_from_logits, predict_occupancy,
    softmax_rows, QueryBatch, TapedEvaluation,
};
pub use params::{DenseLayer, NetworkParams, Standardization};
