//! Adaptive parallelism tuning for dataflow stream jobs.
//!
//! Offline, execution histories are clustered by graph edit distance and a
//! message-passing encoder is pre-trained per cluster to predict
//! operator-level bottlenecks. Online, a monotone classifier over the
//! encoder's parallelism-agnostic embeddings recommends the smallest
//! parallelism per operator, refined against feedback from the
//! deterministic simulator in [`simulator`].

pub mod baseline;
pub mod bottleneck;
pub mod clustering;
pub mod dag;
pub mod encoder;
pub mod finetune;
pub mod ged;
pub mod par;
pub mod pipeline;
pub mod simulator;
pub mod workload;
