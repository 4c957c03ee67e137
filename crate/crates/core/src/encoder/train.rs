//! Full-batch Adam on the masked cross-entropy.

use serde::{Deserialize, Serialize};

use super::gnn::{loss_and_gradients, masked_bce, BatchItem, GnnConfig, GnnParameters, GraphBatch};
use super::{EncoderError, FeatureEncoding};
use crate::bottleneck::{BottleneckLabels, Label};
use crate::dag::{LogicalDag, ParallelismAssignment};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gnn: GnnConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gnn: GnnConfig::default(),
            epochs: 300,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

/// A deployed DAG (rates and parallelism applied) with its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub dag: LogicalDag,
    pub assignment: ParallelismAssignment,
    pub labels: BottleneckLabels,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedEncoder {
    pub params: GnnParameters,
    pub loss_curve: Vec<f64>,
}

impl TrainedEncoder {
    pub fn loss_curve_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.loss_curve.iter().enumerate() {
            out.push_str(&format!("{e},{l:.9}\n"));
        }
        out
    }
}

/// Mean cross-entropy over operators whose label is not -1.
pub fn bce_loss(predictions: &[f64], labels: &[Label]) -> Result<f64, EncoderError> {
    let targets: Vec<Option<f64>> = labels.iter().map(|l| l.target()).collect();
    masked_bce(predictions, &targets).ok_or(EncoderError::NoLabeledOperators)
}

pub fn build_batch(samples: &[TrainingSample], encoding: &FeatureEncoding, p_max: u32) -> GraphBatch {
    let items: Vec<BatchItem<'_>> = samples
        .iter()
        .map(|s| BatchItem {
            dag: &s.dag,
            assignment: &s.assignment,
            labels: Some(&s.labels),
        })
        .collect();
    GraphBatch::new(encoding, p_max, &items)
}

pub fn train_encoder(
    samples: &[TrainingSample],
    encoding: FeatureEncoding,
    config: &TrainConfig,
) -> Result<TrainedEncoder, EncoderError> {
    let batch = build_batch(samples, &encoding, config.gnn.p_max);
    if batch.labeled_count() == 0 {
        return Err(EncoderError::NoLabeledOperators);
    }
    let mut params = GnnParameters::init(config.gnn.clone(), encoding, config.seed);
    params.validate()?;
    let mut m: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
    let mut v = m.clone();
    let mut curve = Vec::with_capacity(config.epochs + 1);
    let eps = 1e-8;
    for epoch in 1..=config.epochs {
        let (loss, grads) = loss_and_gradients(&params, &batch)?;
        curve.push(loss);
        let c1 = 1.0 - config.beta1.powi(epoch as i32);
        let c2 = 1.0 - config.beta2.powi(epoch as i32);
        for ((t, g), (mt, vt)) in params.tensors.iter_mut().zip(&grads).zip(m.iter_mut().zip(v.iter_mut())) {
            for i in 0..g.len() {
                mt[i] = config.beta1 * mt[i] + (1.0 - config.beta1) * g[i];
                vt[i] = config.beta2 * vt[i] + (1.0 - config.beta2) * g[i] * g[i];
                t.data[i] -= config.learning_rate * (mt[i] / c1) / ((vt[i] / c2).sqrt() + eps);
            }
        }
    }
    curve.push(loss_and_gradients(&params, &batch)?.0);
    log::debug!(
        "encoder trained on {} operators: loss {:.4} -> {:.4}",
        batch.labeled_count(),
        curve.first().copied().unwrap_or(f64::NAN),
        curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(TrainedEncoder {
        params,
        loss_curve: curve,
    })
}
