//! End-to-end glue: pretraining per cluster and head-to-head tuning runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{run_ds2, Ds2Config};
use crate::clustering::{kmeans_ged_with, ClusterError, ClusterModel, DEFAULT_MAX_ITER, DEFAULT_TAU};
use crate::dag::{LogicalDag, ParallelismAssignment};
use crate::encoder::{train_encoder, EncoderError, FeatureEncoding, GnnParameters, TrainConfig, TrainingSample};
use crate::finetune::{tune, ClusterContext, FineTuneError, TuneConfig, TuningSession};
use crate::par::{self, Execution};
use crate::simulator::{brute_force_min_assignment, SimError};
use crate::workload::{History, Query, RateSchedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("cluster {cluster}: {source}")]
    Encoder { cluster: usize, source: EncoderError },
    #[error(transparent)]
    FineTune(#[from] FineTuneError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub k: usize,
    pub tau: u32,
    pub max_iter: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            k: 3,
            tau: DEFAULT_TAU,
            max_iter: DEFAULT_MAX_ITER,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub model: ClusterModel,
    pub encoders: BTreeMap<usize, GnnParameters>,
    pub loss_curves: BTreeMap<usize, Vec<f64>>,
    pub samples: BTreeMap<usize, Vec<TrainingSample>>,
}

impl Pretrained {
    pub fn context(&self) -> ClusterContext<'_> {
        ClusterContext {
            model: &self.model,
            encoders: &self.encoders,
            histories: &self.samples,
        }
    }
}

/// Groups materialized histories by the cluster of their query.
pub fn cluster_samples(corpus: &[Query], histories: &[History], model: &ClusterModel) -> BTreeMap<usize, Vec<TrainingSample>> {
    let mut out: BTreeMap<usize, Vec<TrainingSample>> = (0..model.k).map(|c| (c, Vec::new())).collect();
    for h in histories {
        let q = &corpus[h.query];
        out.entry(model.membership[h.query]).or_default().push(TrainingSample {
            dag: h.materialize(q),
            assignment: h.assignment.clone(),
            labels: h.labels.clone(),
        });
    }
    out
}

/// Clusters the corpus and trains one encoder per cluster, concurrently.
/// Clusters without a single labeled operator get no encoder.
pub fn pretrain(
    exec: Execution,
    corpus: &[Query],
    histories: &[History],
    config: &PretrainConfig,
) -> Result<Pretrained, PipelineError> {
    let dags: Vec<LogicalDag> = corpus.iter().map(|q| q.dag.clone()).collect();
    let model = kmeans_ged_with(exec, &dags, config.k, config.max_iter, config.seed, config.tau)?;
    let samples = cluster_samples(corpus, histories, &model);
    let groups: Vec<(usize, &Vec<TrainingSample>)> = samples.iter().map(|(&c, s)| (c, s)).collect();
    let trained = par::map(exec, &groups, |&(c, s)| {
        let encoding = FeatureEncoding::fit(s.iter().map(|t| &t.dag));
        let train = TrainConfig {
            seed: config.train.seed.wrapping_add(c as u64),
            ..config.train.clone()
        };
        (c, train_encoder(s, encoding, &train))
    });
    let mut encoders = BTreeMap::new();
    let mut loss_curves = BTreeMap::new();
    for (c, result) in trained {
        match result {
            Ok(t) => {
                encoders.insert(c, t.params);
                loss_curves.insert(c, t.loss_curve);
            }
            Err(EncoderError::NoLabeledOperators) => log::warn!("cluster {c} has no labeled operators, no encoder trained"),
            Err(source) => return Err(PipelineError::Encoder { cluster: c, source }),
        }
    }
    Ok(Pretrained {
        model,
        encoders,
        loss_curves,
        samples,
    })
}

/// The first `n` queries deployed at their initial parallelism, each at one
/// schedule rate on every source.
pub fn tuning_cases(corpus: &[Query], schedule: &RateSchedule, n: usize, seed: u64) -> Vec<(usize, LogicalDag)> {
    let rates = schedule.rates(seed);
    (0..n.min(corpus.len()))
        .map(|i| (i, corpus[i].at_uniform_rate(rates[i % rates.len()])))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub query: String,
    pub final_total_parallelism: u64,
    pub reconfigurations: usize,
    pub backpressure_occurrences: usize,
    pub final_backpressure: bool,
}

impl ComparisonRow {
    fn of(session: &TuningSession, query: &str) -> Self {
        ComparisonRow {
            method: session.method.clone(),
            query: query.to_string(),
            final_total_parallelism: session.last().total_parallelism,
            reconfigurations: session.reconfigurations(),
            backpressure_occurrences: session.backpressure_occurrences(),
            final_backpressure: session.last().job_backpressure,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub query: usize,
    pub streamtune: TuningSession,
    pub ds2: TuningSession,
    pub unconstrained: TuningSession,
    pub brute_force: ParallelismAssignment,
}

impl CaseResult {
    pub fn rows(&self, name: &str) -> [ComparisonRow; 3] {
        [
            ComparisonRow::of(&self.streamtune, name),
            ComparisonRow::of(&self.ds2, name),
            ComparisonRow::of(&self.unconstrained, name),
        ]
    }
}

/// Runs the tuner, DS2 and the unconstrained ablation on every case.
/// Sessions are independent, so cases run concurrently.
pub fn compare(
    exec: Execution,
    corpus: &[Query],
    cases: &[(usize, LogicalDag)],
    pretrained: &Pretrained,
    tune_config: &TuneConfig,
    ds2_config: &Ds2Config,
) -> Result<Vec<CaseResult>, PipelineError> {
    let ctx = pretrained.context();
    let ablation = tune_config.ablation();
    par::map(exec, cases, |(qi, dag)| {
        let profile = &corpus[*qi].profile;
        Ok(CaseResult {
            query: *qi,
            streamtune: tune(dag, profile, ctx, tune_config)?,
            ds2: run_ds2(dag, profile, ds2_config)?,
            unconstrained: tune(dag, profile, ctx, &ablation)?,
            brute_force: brute_force_min_assignment(dag, profile, tune_config.p_max)?,
        })
    })
    .into_iter()
    .collect()
}

pub fn comparison_csv(corpus: &[Query], results: &[CaseResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        for row in r.rows(&corpus[r.query].name) {
            w.serialize(row).expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}
