//! Operator-level bottleneck labels derived from one execution snapshot.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{LogicalDag, NodeId};
use crate::simulator::ExecutionSnapshot;

/// Default resource threshold (CPU load share).
pub const DEFAULT_THRESHOLD: f64 = 0.60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Unlabeled,
    NonBottleneck,
    Bottleneck,
}

impl Label {
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Unlabeled => -1,
            Label::NonBottleneck => 0,
            Label::Bottleneck => 1,
        }
    }

    /// Training target for labeled operators.
    pub fn target(self) -> Option<f64> {
        match self {
            Label::Unlabeled => None,
            Label::NonBottleneck => Some(0.0),
            Label::Bottleneck => Some(1.0),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.as_i8()
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            -1 => Ok(Label::Unlabeled),
            0 => Ok(Label::NonBottleneck),
            1 => Ok(Label::Bottleneck),
            other => Err(format!("label must be -1, 0 or 1, got {other}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BottleneckLabels {
    pub labels: BTreeMap<NodeId, Label>,
    pub threshold: f64,
}

impl BottleneckLabels {
    pub fn get(&self, id: NodeId) -> Label {
        self.labels.get(&id).copied().unwrap_or(Label::Unlabeled)
    }

    pub fn labeled(&self) -> impl Iterator<Item = (NodeId, Label)> + '_ {
        self.labels
            .iter()
            .filter(|(_, l)| **l != Label::Unlabeled)
            .map(|(&id, &l)| (id, l))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["node_id", "label"]).expect("in-memory csv");
        for (id, l) in &self.labels {
            w.write_record([id.to_string(), l.as_i8().to_string()])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("snapshot operators do not match the dag nodes")]
    SnapshotMismatch,
}

/// Labels operators as bottleneck (1), non-bottleneck (0) or unknown (-1).
///
/// Without job-level backpressure every operator is a non-bottleneck.
/// Otherwise only the direct downstream operators of the backpressure
/// frontier (backpressured operators with no backpressured downstream) get
/// a label, decided by comparing their utilization with `threshold`;
/// everything else stays unlabeled because throttled upstream rates make
/// its capacity inconclusive.
pub fn label_bottlenecks(
    dag: &LogicalDag,
    snapshot: &ExecutionSnapshot,
    threshold: f64,
) -> Result<BottleneckLabels, LabelError> {
    let dag_ids: BTreeSet<NodeId> = dag.nodes.iter().map(|n| n.id).collect();
    let snap_ids: BTreeSet<NodeId> = snapshot.operators.iter().map(|o| o.id).collect();
    if dag_ids != snap_ids || snap_ids.len() != snapshot.operators.len() {
        return Err(LabelError::SnapshotMismatch);
    }

    let mut labels: BTreeMap<NodeId, Label> =
        dag_ids.iter().map(|&id| (id, Label::Unlabeled)).collect();

    if !snapshot.job_level_backpressure {
        labels.values_mut().for_each(|l| *l = Label::NonBottleneck);
        return Ok(BottleneckLabels { labels, threshold });
    }

    let under: BTreeSet<NodeId> = snapshot.backpressured_ids().into_iter().collect();
    let frontier = under
        .iter()
        .filter(|&&o| dag.downstream(o).iter().all(|d| !under.contains(d)));
    for &o in frontier {
        for d in dag.downstream(o) {
            let util = snapshot.get(d).expect("ids checked").utilization;
            let label = if util > threshold {
                Label::Bottleneck
            } else {
                Label::NonBottleneck
            };
            labels.insert(d, label);
        }
    }
    Ok(BottleneckLabels { labels, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{DagBuilder, OperatorKind};
    use crate::simulator::OperatorState;

    fn st(id: NodeId, utilization: f64, bp: f64) -> OperatorState {
        OperatorState {
            id,
            parallelism: 1,
            offered_input_rate: 0.0,
            achieved_throughput: 0.0,
            processing_ability: 1.0,
            utilization,
            saturated: utilization >= 1.0,
            backpressured_fraction: bp,
            busy_fraction: utilization * (1.0 - bp),
            idle_fraction: 1.0 - bp - utilization * (1.0 - bp),
        }
    }

    /// S -> O1 -> {O2, O3} -> O4 with O1 (and S) backpressured by O2.
    pub(crate) fn figure_three() -> (LogicalDag, ExecutionSnapshot) {
        let mut b = DagBuilder::new();
        let s = b.source(1000.0);
        let o1 = b.node(OperatorKind::Map);
        let o2 = b.node(OperatorKind::WindowAggregate);
        let o3 = b.node(OperatorKind::Filter);
        let o4 = b.node(OperatorKind::Map);
        b.edge(s, o1).edge(o1, o2).edge(o1, o3).edge(o2, o4).edge(o3, o4);
        let snap = ExecutionSnapshot::from_states(vec![
            st(s, 0.0, 0.4),
            st(o1, 0.5, 0.4),
            st(o2, 0.98, 0.0),
            st(o3, 0.15, 0.0),
            st(o4, 0.3, 0.0),
        ]);
        (b.build(), snap)
    }

    #[test]
    fn figure_three_labels() {
        let (dag, snap) = figure_three();
        let labels = label_bottlenecks(&dag, &snap, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(labels.get(2), Label::Bottleneck);
        assert_eq!(labels.get(3), Label::NonBottleneck);
        // Outside the frontier's downstream set: left unlabeled.
        assert_eq!(labels.get(4), Label::Unlabeled);
        assert_eq!(labels.get(0), Label::Unlabeled);
        assert_eq!(labels.get(1), Label::Unlabeled);
    }

    #[test]
    fn no_backpressure_labels_everything_zero() {
        let (dag, _) = figure_three();
        let snap = ExecutionSnapshot::from_states((0..5).map(|i| st(i, 0.9, 0.0)).collect());
        let labels = label_bottlenecks(&dag, &snap, DEFAULT_THRESHOLD).unwrap();
        assert!(labels.labels.values().all(|&l| l == Label::NonBottleneck));
    }

    #[test]
    fn cascading_chain() {
        // S -> A -> B -> C, C saturated, backpressure cascades to B, A, S.
        let mut b = DagBuilder::new();
        let s = b.source(1.0);
        let a = b.node(OperatorKind::Map);
        let bb = b.node(OperatorKind::Map);
        let c = b.node(OperatorKind::Map);
        b.edge(s, a).edge(a, bb).edge(bb, c);
        let dag = b.build();
        let snap = ExecutionSnapshot::from_states(vec![
            st(s, 0.0, 0.5),
            st(a, 0.4, 0.5),
            st(bb, 0.5, 0.5),
            st(c, 0.9, 0.0),
        ]);
        let labels = label_bottlenecks(&dag, &snap, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(labels.get(c), Label::Bottleneck);
        for id in [s, a, bb] {
            assert_eq!(labels.get(id), Label::Unlabeled);
        }
        // Idempotent.
        assert_eq!(labels, label_bottlenecks(&dag, &snap, DEFAULT_THRESHOLD).unwrap());
    }

    #[test]
    fn mismatched_snapshot() {
        let (dag, mut snap) = figure_three();
        snap.operators.pop();
        assert_eq!(
            label_bottlenecks(&dag, &snap, DEFAULT_THRESHOLD),
            Err(LabelError::SnapshotMismatch)
        );
    }

    #[test]
    fn label_serde_uses_integers() {
        let (dag, snap) = figure_three();
        let labels = label_bottlenecks(&dag, &snap, DEFAULT_THRESHOLD).unwrap();
        let json = serde_json::to_string(&labels.labels).unwrap();
        assert_eq!(json, r#"{"0":-1,"1":-1,"2":1,"3":0,"4":-1}"#);
        let back: BTreeMap<NodeId, Label> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, labels.labels);
        assert!(serde_json::from_str::<Label>("2").is_err());
        assert!(labels.to_csv().contains("2,1\n"));
    }
}
