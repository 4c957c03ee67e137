//! Online parallelism tuning: warm-up from cluster histories, a classifier
//! that is monotone in parallelism, and a redeploy-and-observe loop.

mod classifier;
mod session;

use thiserror::Error;

use crate::encoder::EncoderError;
use crate::ged::GedError;
use crate::simulator::SimError;

pub use classifier::{
    fit_monotone, fit_unconstrained, min_feasible_parallelism, min_feasible_scan, predict_prob, FeatureMap, FitConfig,
    MonotonicClassifier, ParallelismScale, TrainingExample,
};
pub use session::{
    construct_warmup, session_jsonl, tune, ClusterContext, IterationRecord, StopRule, Termination, TuneConfig, TuningSession,
    DEFAULT_ITERATION_CAP, DEFAULT_WARMUP_SIZE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FineTuneError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("training examples disagree on embedding size or carry labels outside {{0, 1}}")]
    InconsistentDataset,
    #[error("no labeled operators in the warm-up sample")]
    EmptyAfterFiltering,
    #[error("no encoder for cluster {0}")]
    NoEncoderForCluster(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Ged(#[from] GedError),
}
