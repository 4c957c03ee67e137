use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classifier::*;
use super::FineTuneError;
use crate::bottleneck::{label_bottlenecks, BottleneckLabels, Label, DEFAULT_THRESHOLD};
use crate::clustering::{assign_to_nearest, ClusterModel};
use crate::dag::{LogicalDag, NodeId, ParallelismAssignment};
use crate::encoder::{forward, GnnParameters, TrainingSample};
use crate::simulator::{simulate, ExecutionSnapshot, GroundTruthProfile};

pub const DEFAULT_ITERATION_CAP: usize = 15;
pub const DEFAULT_WARMUP_SIZE: usize = 32;

/// When a session ends besides the iteration cap and a repeated
/// recommendation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// At the first backpressure-free deployment.
    FirstClean,
    /// Only once a backpressure-free deployment is recommended again.
    Agreement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub p_max: u32,
    pub iteration_cap: usize,
    pub decision_threshold: f64,
    pub warmup_size: usize,
    pub label_threshold: f64,
    pub fit: FitConfig,
    /// `false` runs the unconstrained ablation.
    pub monotone: bool,
    pub stop_rule: StopRule,
    pub seed: u64,
}

impl TuneConfig {
    /// The unconstrained ablation of this configuration. It always uses a
    /// nonlinear lift over `[h, p]`: with the identity map the score stays
    /// linear in `p` and could only flip the sign of the trend.
    pub fn ablation(&self) -> Self {
        let feature_map = match self.fit.feature_map {
            FeatureMap::Identity => FeatureMap::RandomFourier {
                dim: 64,
                bandwidth: 1.0,
                seed: self.seed,
            },
            ref other => other.clone(),
        };
        TuneConfig {
            monotone: false,
            fit: FitConfig {
                feature_map,
                ..self.fit.clone()
            },
            ..self.clone()
        }
    }
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            p_max: 100,
            iteration_cap: DEFAULT_ITERATION_CAP,
            decision_threshold: 0.5,
            warmup_size: DEFAULT_WARMUP_SIZE,
            label_threshold: DEFAULT_THRESHOLD,
            fit: FitConfig::default(),
            monotone: true,
            stop_rule: StopRule::Agreement,
            seed: 0,
        }
    }
}

/// Read-only pretraining artifacts shared by concurrent sessions.
#[derive(Clone, Copy, Debug)]
pub struct ClusterContext<'a> {
    pub model: &'a ClusterModel,
    pub encoders: &'a BTreeMap<usize, GnnParameters>,
    /// Deployed DAGs with labels, per cluster.
    pub histories: &'a BTreeMap<usize, Vec<TrainingSample>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The last deployment is free of job-level backpressure.
    Converged,
    /// The recommendation repeats a deployment that still backpressures.
    Stalled,
    IterationCap,
}

/// One observed deployment. Iteration 0 is the initial deployment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub assignment: ParallelismAssignment,
    pub total_parallelism: u64,
    pub job_backpressure: bool,
    pub backpressured_ops: Vec<NodeId>,
    pub labels: BottleneckLabels,
    /// Objective of the fit that produced this assignment.
    pub objective: Option<f64>,
    #[serde(skip)]
    pub snapshot: ExecutionSnapshot,
}

impl IterationRecord {
    pub fn observe(
        iteration: usize,
        dag: &LogicalDag,
        assignment: &ParallelismAssignment,
        profile: &GroundTruthProfile,
        label_threshold: f64,
        objective: Option<f64>,
    ) -> Result<Self, FineTuneError> {
        let snapshot = simulate(dag, assignment, profile)?;
        let labels = label_bottlenecks(dag, &snapshot, label_threshold).expect("snapshot built from this dag");
        Ok(IterationRecord {
            iteration,
            assignment: assignment.clone(),
            total_parallelism: assignment.total(),
            job_backpressure: snapshot.job_level_backpressure,
            backpressured_ops: snapshot.backpressured_ids(),
            labels,
            objective,
            snapshot,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuningSession {
    pub method: String,
    pub cluster: Option<usize>,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Iteration whose deployment was restored after a stall or the cap.
    pub restored_from: Option<usize>,
    pub dataset_size: usize,
}

impl TuningSession {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("sessions hold the initial deployment")
    }

    pub fn final_assignment(&self) -> &ParallelismAssignment {
        &self.last().assignment
    }

    /// Redeployments after the initial one.
    pub fn reconfigurations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn backpressure_occurrences(&self) -> usize {
        self.records.iter().filter(|r| r.job_backpressure).count()
    }
}

pub fn session_jsonl(session: &TuningSession) -> String {
    let mut out = String::new();
    for r in &session.records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Pairs the agnostic embedding of every labeled tunable operator with its
/// historical parallelism. Sources and sinks carry no parallelism and are
/// skipped.
pub fn construct_warmup(
    histories: &[TrainingSample],
    params: &GnnParameters,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<TrainingExample>, FineTuneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, histories.len(), sample_size.min(histories.len())).into_vec();
    picked.sort_unstable();
    let mut out = Vec::new();
    for i in picked {
        let s = &histories[i];
        let emb = forward(&s.dag, &s.assignment, params)?;
        append_examples(&mut out, &emb.ids, |id| emb.agnostic(id), &s.assignment, &s.labels);
    }
    if out.is_empty() {
        return Err(FineTuneError::EmptyAfterFiltering);
    }
    Ok(out)
}

fn append_examples(
    out: &mut Vec<TrainingExample>,
    ids: &[NodeId],
    h: impl Fn(NodeId) -> Option<Vec<f64>>,
    assignment: &ParallelismAssignment,
    labels: &BottleneckLabels,
) {
    for &id in ids {
        let (Some(p), Some(y)) = (assignment.get(id), labels.get(id).target()) else {
            continue;
        };
        out.push(TrainingExample {
            h: h(id).expect("id from the embedding table"),
            p,
            y: u8::from(y > 0.5),
        });
    }
}

fn raise_floor(floor: &mut BTreeMap<NodeId, u32>, assignment: &ParallelismAssignment, labels: &BottleneckLabels) {
    for (id, p) in assignment.iter() {
        if labels.get(id) == Label::Bottleneck {
            let f = floor.entry(id).or_insert(p);
            *f = (*f).max(p);
        }
    }
}

/// Tunes `dag` (deployed at its current parallelism and source rates)
/// against the simulator. At least one recommendation is always made. The
/// loop stops once the recommendation stops changing, or under
/// [`StopRule::FirstClean`] at the first backpressure-free deployment.
pub fn tune(
    dag: &LogicalDag,
    profile: &GroundTruthProfile,
    ctx: ClusterContext<'_>,
    config: &TuneConfig,
) -> Result<TuningSession, FineTuneError> {
    let cluster = assign_to_nearest(dag, ctx.model)?;
    let params = ctx.encoders.get(&cluster).ok_or(FineTuneError::NoEncoderForCluster(cluster))?;
    let histories = ctx.histories.get(&cluster).map(Vec::as_slice).unwrap_or(&[]);
    let mut dataset = construct_warmup(histories, params, config.warmup_size, config.seed)?;

    let mut current = dag.current_assignment();
    let embeddings = forward(dag, &current, params)?;
    let tunable: Vec<NodeId> = dag
        .topological_order()
        .map_err(crate::simulator::SimError::from)?
        .into_iter()
        .filter(|&id| current.get(id).is_some())
        .collect();
    let h: BTreeMap<NodeId, Vec<f64>> = tunable
        .iter()
        .map(|&id| (id, embeddings.agnostic(id).expect("tunable ids are embedded")))
        .collect();

    let first = IterationRecord::observe(0, dag, &current, profile, config.label_threshold, None)?;
    append_examples(&mut dataset, &tunable, |id| h.get(&id).cloned(), &current, &first.labels);
    // Utilization falls with parallelism, so an operator seen as a
    // bottleneck at p is one at every smaller p as well. The ablation
    // does not assume monotonicity and gets no floor.
    let mut floor: BTreeMap<NodeId, u32> = BTreeMap::new();
    raise_floor(&mut floor, &current, &first.labels);
    let mut records = vec![first];
    let mut termination = Termination::IterationCap;
    for iteration in 1..=config.iteration_cap {
        let clf = if config.monotone {
            fit_monotone(&dataset, &config.fit)?
        } else {
            fit_unconstrained(&dataset, &config.fit, config.p_max)?
        };
        let mut rec = ParallelismAssignment::default();
        for &id in &tunable {
            let p = if config.monotone {
                min_feasible_parallelism(&clf, &h[&id], config.p_max, config.decision_threshold)
            } else {
                min_feasible_scan(&clf, &h[&id], config.p_max, config.decision_threshold)
            };
            let p = p.unwrap_or(config.p_max);
            let p = match floor.get(&id) {
                Some(&f) if config.monotone => p.max(f + 1).min(config.p_max),
                _ => p,
            };
            rec.set(id, p);
        }
        if rec == current {
            let clean = !records.last().expect("initial record").job_backpressure;
            termination = if clean { Termination::Converged } else { Termination::Stalled };
            break;
        }
        current = rec;
        let record = IterationRecord::observe(iteration, dag, &current, profile, config.label_threshold, Some(clf.objective))?;
        append_examples(&mut dataset, &tunable, |id| h.get(&id).cloned(), &current, &record.labels);
        raise_floor(&mut floor, &current, &record.labels);
        let clean = !record.job_backpressure;
        records.push(record);
        if clean && config.stop_rule == StopRule::FirstClean {
            termination = Termination::Converged;
            break;
        }
    }
    let mut restored_from = None;
    if termination != Termination::Converged && records.last().expect("initial record").job_backpressure {
        // Roll back to the cheapest backpressure-free deployment the tuner
        // itself recommended; the initial deployment does not count.
        let best = records[1..]
            .iter()
            .filter(|r| !r.job_backpressure)
            .min_by_key(|r| (r.total_parallelism, r.iteration));
        if let Some(best) = best {
            restored_from = Some(best.iteration);
            let mut record = best.clone();
            record.iteration = records.len();
            record.objective = None;
            records.push(record);
        }
    }
    log::debug!(
        "tuned {} operators in cluster {cluster}: {:?} after {} redeployments",
        tunable.len(),
        termination,
        records.len() - 1
    );
    Ok(TuningSession {
        method: if config.monotone { "streamtune" } else { "unconstrained" }.to_string(),
        cluster: Some(cluster),
        records,
        termination,
        restored_from,
        dataset_size: dataset.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::encoder::{FeatureEncoding, GnnConfig, INPUT_DIM};
    use crate::workload::{generate_corpus, CorpusSpec};

    fn params(dags: &[LogicalDag]) -> GnnParameters {
        let config = GnnConfig {
            input_dim: INPUT_DIM,
            ..GnnConfig::default()
        };
        GnnParameters::init(config, FeatureEncoding::fit(dags), 7)
    }

    fn fig3_like() -> TrainingSample {
        let corpus = generate_corpus(&CorpusSpec::counts(1, 0, 0), 2);
        let dag = corpus[0].dag.clone();
        let ids = dag.tunable_ids();
        let mut labels = BottleneckLabels {
            labels: dag.nodes.iter().map(|n| (n.id, Label::Unlabeled)).collect(),
            threshold: DEFAULT_THRESHOLD,
        };
        labels.labels.insert(ids[0], Label::Bottleneck);
        labels.labels.insert(ids[1], Label::NonBottleneck);
        TrainingSample {
            assignment: dag.current_assignment(),
            dag,
            labels,
        }
    }

    #[test]
    fn warmup_counts() {
        let s = fig3_like();
        let p = params(std::slice::from_ref(&s.dag));
        let ex = construct_warmup(std::slice::from_ref(&s), &p, 32, 0).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].y, 1);
        assert_eq!(ex[1].y, 0);
        assert_eq!(ex[0].h, forward(&s.dag, &s.assignment, &p).unwrap().agnostic(s.dag.tunable_ids()[0]).unwrap());

        let mut blank = s.clone();
        blank.labels.labels.values_mut().for_each(|l| *l = Label::Unlabeled);
        assert_eq!(
            construct_warmup(&[blank], &p, 32, 0).unwrap_err(),
            FineTuneError::EmptyAfterFiltering
        );
        let many = vec![s.clone(), s.clone(), s];
        assert_eq!(construct_warmup(&many, &p, 10, 0).unwrap().len(), 6);
        assert_eq!(construct_warmup(&many, &p, 2, 0).unwrap().len(), 4);
    }
}
