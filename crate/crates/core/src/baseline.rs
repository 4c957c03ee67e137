//! DS2-style recommender: assumes processing ability grows linearly with
//! parallelism and rescales each operator to its observed input rate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bottleneck::DEFAULT_THRESHOLD;
use crate::dag::{LogicalDag, NodeId, ParallelismAssignment};
use crate::finetune::{FineTuneError, IterationRecord, Termination, TuningSession, DEFAULT_ITERATION_CAP};
use crate::simulator::{ExecutionSnapshot, GroundTruthProfile, OperatorState};

pub const USEFUL_TIME_EPSILON: f64 = 1e-6;

/// What the linear model reads off one operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ds2Observation {
    pub id: NodeId,
    /// Records per unit of useful time across all replicas.
    pub true_processing_rate: f64,
    /// Input rate the operator has to sustain: source rates pushed through
    /// the observed selectivities, so a saturated upstream operator does
    /// not hide the real demand.
    pub offered_rate: f64,
    pub parallelism: u32,
}

impl Ds2Observation {
    /// The fluid model reports the unthrottled throughput, so the records
    /// actually processed are scaled by the time not spent backpressured;
    /// dividing by the busy share then recovers the processing ability.
    pub fn from_state(state: &OperatorState) -> Self {
        let processed = state.achieved_throughput * (1.0 - state.backpressured_fraction);
        Ds2Observation {
            id: state.id,
            true_processing_rate: processed / state.busy_fraction.max(USEFUL_TIME_EPSILON),
            offered_rate: state.offered_input_rate,
            parallelism: state.parallelism,
        }
    }

    pub fn recommend(&self, p_max: u32, noise: f64) -> u32 {
        let rate = self.true_processing_rate * noise;
        if rate <= 0.0 {
            // Fully backpressured: nothing was measured.
            return self.parallelism.clamp(1, p_max);
        }
        let p = (f64::from(self.parallelism) * self.offered_rate / rate).ceil();
        p.clamp(1.0, f64::from(p_max)) as u32
    }
}

/// Target input rate of every operator. Each edge carries its observed
/// flow scaled by how far the upstream operator falls short of its own
/// target. Snapshots without edge flows fall back to observed input rates.
pub fn target_rates(snapshot: &ExecutionSnapshot) -> BTreeMap<NodeId, f64> {
    let mut incoming: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
    for &(u, d, f) in &snapshot.edge_flows {
        incoming.entry(d).or_default().push((u, f));
    }
    fn visit(
        id: NodeId,
        snapshot: &ExecutionSnapshot,
        incoming: &BTreeMap<NodeId, Vec<(NodeId, f64)>>,
        memo: &mut BTreeMap<NodeId, f64>,
    ) -> f64 {
        if let Some(&t) = memo.get(&id) {
            return t;
        }
        let t = match incoming.get(&id) {
            None => snapshot.get(id).map_or(0.0, |s| s.offered_input_rate),
            Some(edges) => edges
                .iter()
                .map(|&(u, f)| {
                    let achieved = snapshot.get(u).map_or(0.0, |s| s.achieved_throughput);
                    let target = visit(u, snapshot, incoming, memo);
                    if achieved > 0.0 {
                        f * target / achieved
                    } else {
                        f
                    }
                })
                .sum(),
        };
        memo.insert(id, t);
        t
    }
    let mut memo = BTreeMap::new();
    for s in &snapshot.operators {
        visit(s.id, snapshot, &incoming, &mut memo);
    }
    memo
}

pub fn ds2_recommend(snapshot: &ExecutionSnapshot, assignment: &ParallelismAssignment, p_max: u32) -> ParallelismAssignment {
    recommend_with(snapshot, assignment, p_max, |_| 1.0)
}

fn recommend_with(
    snapshot: &ExecutionSnapshot,
    assignment: &ParallelismAssignment,
    p_max: u32,
    mut noise: impl FnMut(NodeId) -> f64,
) -> ParallelismAssignment {
    let targets = target_rates(snapshot);
    assignment
        .iter()
        .map(|(id, p)| {
            let rec = snapshot
                .get(id)
                .map(|s| {
                    let mut obs = Ds2Observation::from_state(s);
                    obs.offered_rate = targets[&id];
                    obs.recommend(p_max, noise(id))
                })
                .unwrap_or(p);
            (id, rec)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ds2Config {
    pub p_max: u32,
    pub iteration_cap: usize,
    pub label_threshold: f64,
    /// Half-width of the multiplicative error on measured useful time;
    /// zero disables it.
    pub noise: f64,
    pub seed: u64,
}

impl Default for Ds2Config {
    fn default() -> Self {
        Ds2Config {
            p_max: 100,
            iteration_cap: DEFAULT_ITERATION_CAP,
            label_threshold: DEFAULT_THRESHOLD,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// Applies DS2 recommendations under the same stopping rule as the tuner.
pub fn run_ds2(dag: &LogicalDag, profile: &GroundTruthProfile, config: &Ds2Config) -> Result<TuningSession, FineTuneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = dag.current_assignment();
    let mut records = vec![IterationRecord::observe(0, dag, &current, profile, config.label_threshold, None)?];
    let mut termination = Termination::IterationCap;
    for iteration in 1..=config.iteration_cap {
        let last = records.last().expect("initial record");
        let rec = recommend_with(&last.snapshot, &current, config.p_max, |_| {
            if config.noise > 0.0 {
                1.0 + rng.gen_range(-config.noise..=config.noise)
            } else {
                1.0
            }
        });
        if rec == current {
            termination = if last.job_backpressure {
                Termination::Stalled
            } else {
                Termination::Converged
            };
            break;
        }
        current = rec;
        let record = IterationRecord::observe(iteration, dag, &current, profile, config.label_threshold, None)?;
        let clean = !record.job_backpressure;
        records.push(record);
        if clean {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(TuningSession {
        method: "ds2".to_string(),
        cluster: None,
        records,
        termination,
        restored_from: None,
        dataset_size: 0,
    })
}
