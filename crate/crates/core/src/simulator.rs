//! Steady-state fluid model of a stream processing job.
//!
//! Rates are pushed through the DAG in topological order, then saturation
//! is propagated upstream as backpressure. The hidden ground-truth profile
//! plays the role of the real system: tuners only ever see snapshots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{DagError, LogicalDag, NodeId, OperatorKind, ParallelismAssignment};

/// An operator counts as backpressured at job level when its backpressured
/// time share strictly exceeds this fraction.
pub const JOB_BACKPRESSURE_THRESHOLD: f64 = 0.10;

/// Input rate below this share of the upstream output marks a bottleneck
/// under the input-rate rule.
pub const INPUT_RATE_RULE: f64 = 0.85;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorProfile {
    /// Records per second one replica handles per unit of useful time.
    pub base_capacity: f64,
    pub scaling_exponent: f64,
    /// Output records per input record.
    pub selectivity: f64,
    /// Optional routing of the output stream: downstream id to fraction.
    /// Empty means every downstream operator receives the full output.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub output_split: BTreeMap<NodeId, f64>,
}

impl OperatorProfile {
    pub fn new(base_capacity: f64, scaling_exponent: f64, selectivity: f64) -> Self {
        OperatorProfile {
            base_capacity,
            scaling_exponent,
            selectivity,
            output_split: BTreeMap::new(),
        }
    }

    pub fn processing_ability(&self, parallelism: u32) -> f64 {
        self.base_capacity * f64::from(parallelism).powf(self.scaling_exponent)
    }

    /// Smallest parallelism whose processing ability reaches `rate`.
    pub fn min_parallelism_for(&self, rate: f64, p_max: u32) -> Option<u32> {
        (1..=p_max).find(|&p| self.processing_ability(p) >= rate)
    }
}

/// Hidden per-operator behaviour, keyed by node id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruthProfile(pub BTreeMap<NodeId, OperatorProfile>);

impl GroundTruthProfile {
    pub fn get(&self, id: NodeId) -> Option<&OperatorProfile> {
        self.0.get(&id)
    }

    pub fn insert(&mut self, id: NodeId, p: OperatorProfile) {
        self.0.insert(id, p);
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("no profile entry for operator {0}")]
    MissingProfileEntry(NodeId),
    #[error("invalid profile for operator {id}: {reason}")]
    InvalidProfile { id: NodeId, reason: String },
    #[error("operator {0} has no upstream operators")]
    NoUpstream(NodeId),
    #[error("operator {0} is not part of the snapshot")]
    UnknownOperator(NodeId),
    #[error(transparent)]
    Dag(#[from] DagError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorState {
    pub id: NodeId,
    pub parallelism: u32,
    pub offered_input_rate: f64,
    pub achieved_throughput: f64,
    /// Unbounded (`f64::INFINITY`) for sources and sinks.
    pub processing_ability: f64,
    pub utilization: f64,
    pub saturated: bool,
    pub backpressured_fraction: f64,
    pub busy_fraction: f64,
    pub idle_fraction: f64,
}

impl OperatorState {
    pub fn is_backpressured(&self) -> bool {
        self.backpressured_fraction > 0.0
    }

    /// The backpressured-time rule used for job-level and per-operator
    /// backpressure detection.
    pub fn under_backpressure(&self) -> bool {
        self.backpressured_fraction > JOB_BACKPRESSURE_THRESHOLD
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionSnapshot {
    /// One entry per DAG node, in `dag.nodes` order.
    pub operators: Vec<OperatorState>,
    pub job_level_backpressure: bool,
    /// Records per second on every edge `(from, to, rate)`, in `dag.edges`
    /// order. Empty for hand-written snapshots.
    pub edge_flows: Vec<(NodeId, NodeId, f64)>,
}

impl ExecutionSnapshot {
    /// Builds a snapshot from hand-written states, deriving the job flag.
    pub fn from_states(operators: Vec<OperatorState>) -> Self {
        let job_level_backpressure = operators.iter().any(OperatorState::under_backpressure);
        ExecutionSnapshot {
            operators,
            job_level_backpressure,
            edge_flows: Vec::new(),
        }
    }

    pub fn get(&self, id: NodeId) -> Option<&OperatorState> {
        self.operators.iter().find(|o| o.id == id)
    }

    pub fn backpressured_ids(&self) -> Vec<NodeId> {
        self.operators
            .iter()
            .filter(|o| o.under_backpressure())
            .map(|o| o.id)
            .collect()
    }

    pub fn saturated_ids(&self) -> Vec<NodeId> {
        self.operators
            .iter()
            .filter(|o| o.saturated)
            .map(|o| o.id)
            .collect()
    }

    /// Per-operator CSV export.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "node_id",
            "parallelism",
            "offered_input_rate",
            "achieved_throughput",
            "processing_ability",
            "utilization",
            "saturated",
            "backpressured_fraction",
            "busy_fraction",
            "idle_fraction",
        ])
        .expect("in-memory csv");
        for o in &self.operators {
            w.write_record([
                o.id.to_string(),
                o.parallelism.to_string(),
                o.offered_input_rate.to_string(),
                o.achieved_throughput.to_string(),
                o.processing_ability.to_string(),
                o.utilization.to_string(),
                o.saturated.to_string(),
                o.backpressured_fraction.to_string(),
                o.busy_fraction.to_string(),
                o.idle_fraction.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

fn check_profile(dag: &LogicalDag, profile: &GroundTruthProfile) -> Result<(), SimError> {
    let invalid = |id, reason: &str| SimError::InvalidProfile {
        id,
        reason: reason.to_string(),
    };
    for n in &dag.nodes {
        let entry = match profile.get(n.id) {
            Some(e) => e,
            None if n.kind.is_tunable() => return Err(SimError::MissingProfileEntry(n.id)),
            None => continue,
        };
        if !(entry.base_capacity.is_finite() && entry.base_capacity > 0.0) {
            return Err(invalid(n.id, "base_capacity must be positive"));
        }
        if !(entry.scaling_exponent > 0.0 && entry.scaling_exponent <= 1.0) {
            return Err(invalid(n.id, "scaling_exponent must lie in (0, 1]"));
        }
        if !(entry.selectivity.is_finite() && entry.selectivity > 0.0) {
            return Err(invalid(n.id, "selectivity must be positive"));
        }
        let downstream = dag.downstream(n.id);
        for (&d, &share) in &entry.output_split {
            if !downstream.contains(&d) {
                return Err(invalid(n.id, "output_split names a non-downstream operator"));
            }
            if !(share.is_finite() && share >= 0.0) {
                return Err(invalid(n.id, "output_split fractions must be non-negative"));
            }
        }
    }
    Ok(())
}

/// Computes the steady state of `dag` deployed with `assignment`.
pub fn simulate(
    dag: &LogicalDag,
    assignment: &ParallelismAssignment,
    profile: &GroundTruthProfile,
) -> Result<ExecutionSnapshot, SimError> {
    dag.check_assignment(assignment, u32::MAX)?;
    check_profile(dag, profile)?;
    let order = dag.topological_order()?;
    let adj = dag.adjacency();
    let n = dag.nodes.len();

    let mut offered = vec![0.0_f64; n];
    let mut achieved = vec![0.0_f64; n];
    let mut ability = vec![f64::INFINITY; n];
    let mut parallelism = vec![0_u32; n];
    // Total rate arriving at each operator from its upstream operators.
    let mut inflow: Vec<f64> = vec![0.0; n];
    let mut flow: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();

    for &id in &order {
        let v = adj.pos(id).expect("ordered ids exist");
        let node = &dag.nodes[v];
        parallelism[v] = assignment.get(id).unwrap_or(node.parallelism);
        let output = match node.kind {
            OperatorKind::Source => {
                offered[v] = node.source_rate;
                achieved[v] = node.source_rate;
                node.source_rate
            }
            OperatorKind::Sink => {
                offered[v] = inflow[v];
                achieved[v] = inflow[v];
                0.0
            }
            _ => {
                let prof = profile.get(id).expect("checked above");
                offered[v] = inflow[v];
                ability[v] = prof.processing_ability(parallelism[v]);
                achieved[v] = offered[v].min(ability[v]);
                prof.selectivity * achieved[v]
            }
        };
        let split = profile.get(id).map(|p| &p.output_split).filter(|s| !s.is_empty());
        for &d in &adj.succs[v] {
            let share = match split {
                Some(s) => s.get(&dag.nodes[d].id).copied().unwrap_or(0.0),
                None => 1.0,
            };
            inflow[d] += output * share;
            *flow.entry((id, dag.nodes[d].id)).or_insert(0.0) += output * share;
        }
    }

    let saturated: Vec<bool> = (0..n).map(|v| offered[v] > ability[v]).collect();
    // Worst overload among saturated operators strictly downstream.
    let mut worst = vec![0.0_f64; n];
    for &id in order.iter().rev() {
        let v = adj.pos(id).expect("ordered ids exist");
        let mut w = 0.0_f64;
        for &d in &adj.succs[v] {
            if saturated[d] {
                w = w.max(offered[d] / ability[d] - 1.0);
            }
            w = w.max(worst[d]);
        }
        worst[v] = w;
    }

    let operators = (0..n)
        .map(|v| {
            let utilization = if ability[v].is_finite() {
                (offered[v] / ability[v]).min(1.0)
            } else {
                0.0
            };
            let bp = worst[v].clamp(0.0, 1.0);
            let busy = utilization * (1.0 - bp);
            OperatorState {
                id: dag.nodes[v].id,
                parallelism: parallelism[v],
                offered_input_rate: offered[v],
                achieved_throughput: achieved[v],
                processing_ability: ability[v],
                utilization,
                saturated: saturated[v],
                backpressured_fraction: bp,
                busy_fraction: busy,
                idle_fraction: (1.0 - bp - busy).max(0.0),
            }
        })
        .collect();
    let mut snapshot = ExecutionSnapshot::from_states(operators);
    snapshot.edge_flows = dag
        .edges
        .iter()
        .map(|&(u, d)| (u, d, flow[&(u, d)]))
        .collect();
    Ok(snapshot)
}

pub fn is_job_backpressured(snapshot: &ExecutionSnapshot) -> bool {
    snapshot.operators.iter().any(OperatorState::under_backpressure)
}

/// Input-rate rule for systems without built-in backpressure: the operator
/// is a bottleneck when its throughput stays below 85% of what its
/// upstream operators emit towards it.
pub fn timely_bottleneck_predicate(
    dag: &LogicalDag,
    snapshot: &ExecutionSnapshot,
    operator: NodeId,
) -> Result<bool, SimError> {
    if dag.upstream(operator).is_empty() {
        return Err(SimError::NoUpstream(operator));
    }
    let state = snapshot
        .get(operator)
        .ok_or(SimError::UnknownOperator(operator))?;
    Ok(state.achieved_throughput < INPUT_RATE_RULE * state.offered_input_rate)
}

/// Minimal per-operator parallelism that keeps the job free of job-level
/// backpressure, found by exhaustive search: every other tunable operator is
/// held at `p_max` and the operator's own degree is scanned upwards.
/// Operators that cannot be fixed within `p_max` map to `p_max`.
pub fn brute_force_min_assignment(
    dag: &LogicalDag,
    profile: &GroundTruthProfile,
    p_max: u32,
) -> Result<ParallelismAssignment, SimError> {
    let ample: ParallelismAssignment = dag.tunable_ids().into_iter().map(|id| (id, p_max)).collect();
    let mut result = ParallelismAssignment::default();
    for id in dag.tunable_ids() {
        let mut trial = ample.clone();
        let mut chosen = p_max;
        for p in 1..=p_max {
            trial.set(id, p);
            if !operator_causes_backpressure(dag, &trial, profile, id)? {
                chosen = p;
                break;
            }
        }
        result.set(id, chosen);
    }
    Ok(result)
}

/// Strictly feasible variant: the smallest degree at which the operator is
/// not saturated at all, with every other operator held at `p_max`.
pub fn brute_force_unsaturated_assignment(
    dag: &LogicalDag,
    profile: &GroundTruthProfile,
    p_max: u32,
) -> Result<ParallelismAssignment, SimError> {
    let ample: ParallelismAssignment = dag.tunable_ids().into_iter().map(|id| (id, p_max)).collect();
    let mut result = ParallelismAssignment::default();
    for id in dag.tunable_ids() {
        let mut trial = ample.clone();
        let mut chosen = p_max;
        for p in 1..=p_max {
            trial.set(id, p);
            let snap = simulate(dag, &trial, profile)?;
            if !snap.get(id).expect("simulated").saturated {
                chosen = p;
                break;
            }
        }
        result.set(id, chosen);
    }
    Ok(result)
}

fn operator_causes_backpressure(
    dag: &LogicalDag,
    assignment: &ParallelismAssignment,
    profile: &GroundTruthProfile,
    id: NodeId,
) -> Result<bool, SimError> {
    let snap = simulate(dag, assignment, profile)?;
    let state = snap.get(id).expect("simulated");
    Ok(state.saturated
        && state.offered_input_rate / state.processing_ability - 1.0 > JOB_BACKPRESSURE_THRESHOLD)
}
