//! Graph encoder predicting operator-level bottlenecks, trained per cluster.

mod features;
mod gnn;
mod train;

use thiserror::Error;

use crate::dag::DagError;

pub use features::{FeatureEncoding, CATEGORICAL_DIM, INPUT_DIM, NUMERIC_FEATURES};
pub use gnn::{
    activation_pattern, forward, forward_batch, loss_and_gradients, masked_bce, predict_bottleneck, sigmoid, BatchItem, Embeddings,
    ForwardPass, GnnConfig, GnnParameters, GraphBatch, Tensor, BCE_EPSILON, PARAMETER_VERSION,
};
pub use train::{bce_loss, build_batch, train_encoder, TrainConfig, TrainedEncoder, TrainingSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("no labeled operators to train or evaluate on")]
    NoLabeledOperators,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Dag(#[from] DagError),
}
