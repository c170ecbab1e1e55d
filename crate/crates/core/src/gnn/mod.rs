//! Edge-weighted GATv2 graph classifier.
//!
//! Each layer scores every directed edge `(i ← j)` with the dynamic GATv2
//! form `aᵀ LeakyReLU(Θ_dst h_i + Θ_src h_j)`, normalizes the scores over the
//! in-neighbourhood of `i`, and aggregates edge messages
//! `MLP₁([h_i; h_j; w_ij])` weighted by those coefficients. Heads are
//! concatenated between layers and averaged at the last one. A residual
//! readout `g = MLP₂(z) + z` over the node embeddings feeds a linear
//! log-softmax head.

mod model;
mod train;

pub use model::{
    attention_scores, edge_messages, node_update, readout, Activation, AttentionSnapshot, ForwardOutput, GatConfig,
    GatLayerParams, GatModel, GraphInput, LayerVars, Prediction, Readout,
};
pub use train::{class_weights, train, weighted_nll_loss, weighted_nll_value, TrainConfig, TrainOutcome, TrainRecord};

use thiserror::Error;

use crate::autodiff::AdError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("dimension mismatch for {what}: got {got}, expected {expected}")]
    DimensionMismatch { what: String, got: usize, expected: usize },
    #[error("attention over node {node} (layer {layer}, head {head}) sums to {sum}")]
    AttentionNormalization { layer: usize, head: usize, node: usize, sum: f64 },
    #[error("class {class} has no training samples")]
    EmptyClass { class: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Selection(#[from] crate::selection::SelectionError),
}

pub type Result<T> = std::result::Result<T, GnnError>;
