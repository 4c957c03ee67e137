//! Logical dataflow DAGs: operator nodes, static features, parallelism
//! assignments and the JSON file format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on the number of operators a DAG file may describe.
pub const MAX_NODES: usize = 64;

pub type NodeId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Source,
    Map,
    FlatMap,
    Filter,
    WindowAggregate,
    Join,
    Sink,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 7] = [
        OperatorKind::Source,
        OperatorKind::Map,
        OperatorKind::FlatMap,
        OperatorKind::Filter,
        OperatorKind::WindowAggregate,
        OperatorKind::Join,
        OperatorKind::Sink,
    ];

    /// Sources and sinks are structural; every other operator gets a
    /// parallelism recommendation.
    pub fn is_tunable(self) -> bool {
        !matches!(self, OperatorKind::Source | OperatorKind::Sink)
    }

    pub fn is_windowed(self) -> bool {
        matches!(self, OperatorKind::WindowAggregate | OperatorKind::Join)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OperatorKind::Source => "source",
            OperatorKind::Map => "map",
            OperatorKind::FlatMap => "flat_map",
            OperatorKind::Filter => "filter",
            OperatorKind::WindowAggregate => "window_aggregate",
            OperatorKind::Join => "join",
            OperatorKind::Sink => "sink",
        };
        f.write_str(s)
    }
}

macro_rules! vocabulary {
    ($(#[$meta:meta])* $name:ident { $($variant:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }
        }
    };
}

vocabulary!(WindowType { None, Tumbling, Sliding });
vocabulary!(WindowPolicy { None, Count, Time });
vocabulary!(JoinKeyClass { None, Int, String, Composite });
vocabulary!(AggregateClass { None, Int, Float });
vocabulary!(AggregateKeyClass { None, Int, String });
vocabulary!(AggregateFunction { None, Min, Max, Avg, Sum, Count });
vocabulary!(TupleDataType { Primitive, Composite });

/// Static, execution-independent operator features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticFeatures {
    pub window_type: WindowType,
    pub window_policy: WindowPolicy,
    pub window_length: f64,
    pub sliding_length: f64,
    pub join_key_class: JoinKeyClass,
    pub aggregate_class: AggregateClass,
    pub aggregate_key_class: AggregateKeyClass,
    pub aggregate_function: AggregateFunction,
    pub tuple_width_in: u32,
    pub tuple_width_out: u32,
    pub tuple_data_type: TupleDataType,
}

impl Default for StaticFeatures {
    fn default() -> Self {
        StaticFeatures {
            window_type: WindowType::None,
            window_policy: WindowPolicy::None,
            window_length: 0.0,
            sliding_length: 0.0,
            join_key_class: JoinKeyClass::None,
            aggregate_class: AggregateClass::None,
            aggregate_key_class: AggregateKeyClass::None,
            aggregate_function: AggregateFunction::None,
            tuple_width_in: 1,
            tuple_width_out: 1,
            tuple_data_type: TupleDataType::Primitive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorNode {
    pub id: NodeId,
    pub kind: OperatorKind,
    pub statics: StaticFeatures,
    #[serde(default)]
    pub source_rate: f64,
    pub parallelism: u32,
}

impl OperatorNode {
    pub fn new(id: NodeId, kind: OperatorKind) -> Self {
        OperatorNode {
            id,
            kind,
            statics: StaticFeatures::default(),
            source_rate: 0.0,
            parallelism: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicalDag {
    pub nodes: Vec<OperatorNode>,
    pub edges: Vec<(NodeId, NodeId)>,
}

/// Per-operator parallelism degrees, keyed by node id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParallelismAssignment(pub BTreeMap<NodeId, u32>);

impl ParallelismAssignment {
    pub fn get(&self, id: NodeId) -> Option<u32> {
        self.0.get(&id).copied()
    }

    pub fn set(&mut self, id: NodeId, p: u32) {
        self.0.insert(id, p);
    }

    pub fn total(&self) -> u64 {
        self.0.values().map(|&p| u64::from(p)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(NodeId, u32)> for ParallelismAssignment {
    fn from_iter<I: IntoIterator<Item = (NodeId, u32)>>(iter: I) -> Self {
        ParallelismAssignment(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DagError {
    #[error("dag has no nodes")]
    Empty,
    #[error("dag has {0} nodes, at most {MAX_NODES} are allowed")]
    TooManyNodes(usize),
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("edge {0}->{1} references an unknown node")]
    DanglingEdge(NodeId, NodeId),
    #[error("duplicate edge {0}->{1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("cycle detected through node {0}")]
    CycleDetected(NodeId),
    #[error("node {0} is not reachable from any source")]
    Unreachable(NodeId),
    #[error("node {id}: {reason}")]
    FeatureConstraintViolated { id: NodeId, reason: String },
    #[error("assignment does not match the tunable operators: {0}")]
    AssignmentMismatch(String),
}

/// Position-indexed adjacency of a DAG. Positions follow `dag.nodes`.
#[derive(Clone, Debug)]
pub struct Adjacency {
    pub positions: BTreeMap<NodeId, usize>,
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn pos(&self, id: NodeId) -> Option<usize> {
        self.positions.get(&id).copied()
    }
}

impl LogicalDag {
    pub fn new(nodes: Vec<OperatorNode>, edges: Vec<(NodeId, NodeId)>) -> Self {
        LogicalDag { nodes, edges }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&OperatorNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut OperatorNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    /// Builds adjacency lists. Duplicate ids keep their first position and
    /// dangling edges are skipped; `validate` reports both.
    pub fn adjacency(&self) -> Adjacency {
        let mut positions = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            positions.entry(n.id).or_insert(i);
        }
        let mut preds = vec![Vec::new(); self.nodes.len()];
        let mut succs = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            if let (Some(&pa), Some(&pb)) = (positions.get(&a), positions.get(&b)) {
                succs[pa].push(pb);
                preds[pb].push(pa);
            }
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_by_key(|&p| self.nodes[p].id);
        }
        Adjacency {
            positions,
            preds,
            succs,
        }
    }

    pub fn upstream(&self, id: NodeId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .edges
            .iter()
            .filter(|e| e.1 == id)
            .map(|e| e.0)
            .collect();
        v.sort_unstable();
        v
    }

    pub fn downstream(&self, id: NodeId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .edges
            .iter()
            .filter(|e| e.0 == id)
            .map(|e| e.1)
            .collect();
        v.sort_unstable();
        v
    }

    /// Ids of operators that receive parallelism recommendations, ascending.
    pub fn tunable_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.kind.is_tunable())
            .map(|n| n.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// The parallelism currently recorded on the tunable nodes.
    pub fn current_assignment(&self) -> ParallelismAssignment {
        self.nodes
            .iter()
            .filter(|n| n.kind.is_tunable())
            .map(|n| (n.id, n.parallelism))
            .collect()
    }

    pub fn apply_assignment(&mut self, assignment: &ParallelismAssignment) {
        for n in &mut self.nodes {
            if let Some(p) = assignment.get(n.id) {
                n.parallelism = p;
            }
        }
    }

    /// Sets the rate of a source node and refreshes the rate feature on its
    /// first-level downstream operators (sum over their source inputs).
    pub fn set_source_rate(&mut self, source: NodeId, rate: f64) {
        if let Some(n) = self.node_mut(source) {
            n.source_rate = rate;
        }
        self.refresh_first_level_rates();
    }

    pub fn refresh_first_level_rates(&mut self) {
        let rates: BTreeMap<NodeId, f64> = self
            .nodes
            .iter()
            .filter(|n| n.kind == OperatorKind::Source)
            .map(|n| (n.id, n.source_rate))
            .collect();
        let mut incoming: BTreeMap<NodeId, f64> = BTreeMap::new();
        for &(a, b) in &self.edges {
            if let Some(r) = rates.get(&a) {
                *incoming.entry(b).or_insert(0.0) += r;
            }
        }
        for n in &mut self.nodes {
            if n.kind != OperatorKind::Source {
                n.source_rate = incoming.get(&n.id).copied().unwrap_or(0.0);
            }
        }
    }

    /// Checks structural and feature invariants, reporting the first
    /// violation found.
    pub fn validate(&self) -> Result<(), DagError> {
        if self.nodes.is_empty() {
            return Err(DagError::Empty);
        }
        if self.nodes.len() > MAX_NODES {
            return Err(DagError::TooManyNodes(self.nodes.len()));
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id) {
                return Err(DagError::DuplicateNodeId(n.id));
            }
        }
        let mut edge_set = BTreeSet::new();
        for &(a, b) in &self.edges {
            if !seen.contains(&a) || !seen.contains(&b) {
                return Err(DagError::DanglingEdge(a, b));
            }
            if a == b {
                return Err(DagError::CycleDetected(a));
            }
            if !edge_set.insert((a, b)) {
                return Err(DagError::DuplicateEdge(a, b));
            }
        }
        self.topological_order()?;

        let adj = self.adjacency();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind == OperatorKind::Source && !adj.preds[i].is_empty() {
                return Err(violation(n.id, "source node has incoming edges"));
            }
            if n.kind == OperatorKind::Sink && !adj.succs[i].is_empty() {
                return Err(violation(n.id, "sink node has outgoing edges"));
            }
            check_features(n)?;
            if n.source_rate > 0.0
                && n.kind != OperatorKind::Source
                && !adj.preds[i]
                    .iter()
                    .any(|&u| self.nodes[u].kind == OperatorKind::Source)
            {
                return Err(violation(
                    n.id,
                    "non-zero source_rate on an operator that is not fed by a source",
                ));
            }
        }

        // Reachability from sources.
        let mut reached = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].kind == OperatorKind::Source)
            .collect();
        for &s in &stack {
            reached[s] = true;
        }
        while let Some(u) = stack.pop() {
            for &v in &adj.succs[u] {
                if !reached[v] {
                    reached[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(DagError::Unreachable(self.nodes[i].id));
        }
        Ok(())
    }

    /// Kahn's algorithm with ties broken by ascending node id.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, DagError> {
        let adj = self.adjacency();
        let mut indegree: Vec<usize> = adj.preds.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<(NodeId, usize)> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| (self.nodes[i].id, i))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some((id, pos)) = ready.pop_first() {
            order.push(id);
            for &v in &adj.succs[pos] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.insert((self.nodes[v].id, v));
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = indegree
                .iter()
                .enumerate()
                .filter(|(_, &d)| d > 0)
                .map(|(i, _)| self.nodes[i].id)
                .min()
                .unwrap_or_default();
            return Err(DagError::CycleDetected(stuck));
        }
        Ok(order)
    }

    /// Checks that `assignment` covers exactly the tunable operators with
    /// values in `[1, p_max]`.
    pub fn check_assignment(
        &self,
        assignment: &ParallelismAssignment,
        p_max: u32,
    ) -> Result<(), DagError> {
        let tunable: BTreeSet<NodeId> = self.tunable_ids().into_iter().collect();
        let given: BTreeSet<NodeId> = assignment.0.keys().copied().collect();
        if tunable != given {
            let missing: Vec<_> = tunable.difference(&given).collect();
            let extra: Vec<_> = given.difference(&tunable).collect();
            return Err(DagError::AssignmentMismatch(format!(
                "missing {missing:?}, unexpected {extra:?}"
            )));
        }
        if let Some((id, p)) = assignment.iter().find(|&(_, p)| p == 0 || p > p_max) {
            return Err(DagError::AssignmentMismatch(format!(
                "node {id} has parallelism {p} outside [1, {p_max}]"
            )));
        }
        Ok(())
    }
}

fn violation(id: NodeId, reason: &str) -> DagError {
    DagError::FeatureConstraintViolated {
        id,
        reason: reason.to_string(),
    }
}

fn check_features(n: &OperatorNode) -> Result<(), DagError> {
    let s = &n.statics;
    if n.parallelism == 0 {
        return Err(violation(n.id, "parallelism must be at least 1"));
    }
    if !(n.source_rate.is_finite() && n.source_rate >= 0.0) {
        return Err(violation(n.id, "source_rate must be finite and non-negative"));
    }
    for (name, v) in [
        ("window_length", s.window_length),
        ("sliding_length", s.sliding_length),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(violation(n.id, &format!("{name} must be finite and non-negative")));
        }
    }
    if s.tuple_width_in == 0 || s.tuple_width_out == 0 {
        return Err(violation(n.id, "tuple widths must be positive"));
    }
    let has_window = s.window_type != WindowType::None
        || s.window_policy != WindowPolicy::None
        || s.window_length != 0.0
        || s.sliding_length != 0.0;
    if has_window && !n.kind.is_windowed() {
        return Err(violation(
            n.id,
            "window fields are only allowed on window_aggregate and join operators",
        ));
    }
    if s.window_type == WindowType::Sliding && s.sliding_length > s.window_length {
        return Err(violation(n.id, "sliding_length exceeds window_length"));
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid dag: {0}")]
    Invalid(#[from] DagError),
}

/// Parses and validates a DAG from its JSON text.
pub fn parse_dag(text: &str) -> Result<LogicalDag, FormatError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let dag: LogicalDag = serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            FormatError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        } else {
            FormatError::Schema {
                path,
                message: inner.to_string(),
            }
        }
    })?;
    if dag.nodes.is_empty() {
        return Err(FormatError::Schema {
            path: "nodes".into(),
            message: "at least one node is required".into(),
        });
    }
    dag.validate()?;
    Ok(dag)
}

pub fn serialize_dag(dag: &LogicalDag) -> String {
    serde_json::to_string_pretty(dag).expect("dag serialization is infallible")
}

/// Incremental construction helper used by the generator and tests.
#[derive(Default)]
pub struct DagBuilder {
    nodes: Vec<OperatorNode>,
    edges: Vec<(NodeId, NodeId)>,
}

impl DagBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, kind: OperatorKind) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(OperatorNode::new(id, kind));
        id
    }

    pub fn node_with(&mut self, kind: OperatorKind, statics: StaticFeatures) -> NodeId {
        let id = self.node(kind);
        self.nodes[id as usize].statics = statics;
        id
    }

    pub fn source(&mut self, rate: f64) -> NodeId {
        let id = self.node(OperatorKind::Source);
        self.nodes[id as usize].source_rate = rate;
        id
    }

    pub fn edge(&mut self, from: NodeId, to: NodeId) -> &mut Self {
        self.edges.push((from, to));
        self
    }

    pub fn parallelism(&mut self, id: NodeId, p: u32) -> &mut Self {
        self.nodes[id as usize].parallelism = p;
        self
    }

    pub fn build(self) -> LogicalDag {
        let mut dag = LogicalDag::new(self.nodes, self.edges);
        dag.refresh_first_level_rates();
        dag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// S -> O1 -> {O2, O3} -> O4, ids 0..=4.
    pub(crate) fn figure_one() -> LogicalDag {
        let mut b = DagBuilder::new();
        let s = b.source(1000.0);
        let o1 = b.node(OperatorKind::Map);
        let o2 = b.node(OperatorKind::Filter);
        let o3 = b.node(OperatorKind::Filter);
        let o4 = b.node(OperatorKind::Map);
        b.edge(s, o1).edge(o1, o2).edge(o1, o3).edge(o2, o4).edge(o3, o4);
        b.build()
    }

    #[test]
    fn single_source_is_valid() {
        let mut b = DagBuilder::new();
        b.source(10.0);
        assert_eq!(b.build().validate(), Ok(()));
    }

    #[test]
    fn two_cycle_is_rejected() {
        let mut b = DagBuilder::new();
        let s = b.source(1.0);
        let a = b.node(OperatorKind::Map);
        let c = b.node(OperatorKind::Map);
        b.edge(s, a).edge(a, c).edge(c, a);
        assert!(matches!(
            b.build().validate(),
            Err(DagError::CycleDetected(_))
        ));
    }

    #[test]
    fn figure_one_validates_and_orders() {
        let dag = figure_one();
        assert_eq!(dag.validate(), Ok(()));
        assert_eq!(dag.topological_order().unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(dag.node(1).unwrap().source_rate, 1000.0);
        assert_eq!(dag.node(2).unwrap().source_rate, 0.0);
    }

    #[test]
    fn chain_and_diamond_orders() {
        let mut b = DagBuilder::new();
        let s = b.source(1.0);
        let o1 = b.node(OperatorKind::Map);
        let o2 = b.node(OperatorKind::Map);
        b.edge(s, o1).edge(o1, o2);
        assert_eq!(b.build().topological_order().unwrap(), vec![0, 1, 2]);

        // Insert the nodes out of id order to exercise the tie-break.
        let mut nodes = vec![
            OperatorNode::new(3, OperatorKind::Map),
            OperatorNode::new(2, OperatorKind::Map),
            OperatorNode::new(1, OperatorKind::Map),
            OperatorNode::new(0, OperatorKind::Source),
        ];
        nodes[3].source_rate = 5.0;
        let dag = LogicalDag::new(nodes, vec![(0, 2), (0, 1), (1, 3), (2, 3)]);
        assert_eq!(dag.topological_order().unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn dangling_edge_and_unreachable() {
        let mut dag = figure_one();
        dag.edges.push((4, 99));
        assert_eq!(dag.validate(), Err(DagError::DanglingEdge(4, 99)));

        let mut dag = figure_one();
        dag.nodes.push(OperatorNode::new(7, OperatorKind::Map));
        assert_eq!(dag.validate(), Err(DagError::Unreachable(7)));
    }

    #[test]
    fn source_and_sink_direction_rules() {
        let mut dag = figure_one();
        dag.nodes.push(OperatorNode::new(5, OperatorKind::Map));
        dag.edges.push((5, 0));
        assert!(matches!(
            dag.validate(),
            Err(DagError::FeatureConstraintViolated { id: 0, .. })
        ));

        let mut dag = figure_one();
        dag.nodes[4].kind = OperatorKind::Sink;
        dag.nodes.push(OperatorNode::new(5, OperatorKind::Map));
        dag.edges.push((4, 5));
        assert!(matches!(
            dag.validate(),
            Err(DagError::FeatureConstraintViolated { id: 4, .. })
        ));
    }

    #[test]
    fn window_feature_rules() {
        let mut dag = figure_one();
        dag.nodes[2].statics.window_type = WindowType::Tumbling;
        assert!(matches!(
            dag.validate(),
            Err(DagError::FeatureConstraintViolated { id: 2, .. })
        ));

        let mut dag = figure_one();
        dag.nodes[4].kind = OperatorKind::WindowAggregate;
        dag.nodes[4].statics.window_type = WindowType::Sliding;
        dag.nodes[4].statics.window_length = 10.0;
        dag.nodes[4].statics.sliding_length = 20.0;
        assert!(matches!(
            dag.validate(),
            Err(DagError::FeatureConstraintViolated { id: 4, .. })
        ));
        dag.nodes[4].statics.sliding_length = 5.0;
        assert_eq!(dag.validate(), Ok(()));
    }

    #[test]
    fn source_rate_only_on_first_level() {
        let mut dag = figure_one();
        dag.nodes[3].source_rate = 12.0;
        assert!(matches!(
            dag.validate(),
            Err(DagError::FeatureConstraintViolated { id: 3, .. })
        ));
    }

    #[test]
    fn too_many_nodes() {
        let mut b = DagBuilder::new();
        let s = b.source(1.0);
        let mut prev = s;
        for _ in 0..MAX_NODES {
            let n = b.node(OperatorKind::Map);
            b.edge(prev, n);
            prev = n;
        }
        assert_eq!(
            b.build().validate(),
            Err(DagError::TooManyNodes(MAX_NODES + 1))
        );
    }

    #[test]
    fn parse_rejects_empty_nodes() {
        let err = parse_dag(r#"{"nodes": [], "edges": []}"#).unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "nodes"));
    }

    #[test]
    fn parse_rejects_unknown_kind_naming_field() {
        let text = serialize_dag(&figure_one()).replacen("\"map\"", "\"teleport\"", 1);
        match parse_dag(&text).unwrap_err() {
            FormatError::Schema { path, message } => {
                assert!(path.ends_with(".kind"), "path was {path}");
                assert!(message.contains("teleport"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_reports_syntax_location() {
        let err = parse_dag("{\n  \"nodes\": [,\n").unwrap_err();
        assert!(matches!(err, FormatError::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn roundtrip_figure_one() {
        let dag = figure_one();
        assert_eq!(parse_dag(&serialize_dag(&dag)).unwrap(), dag);
    }

    #[test]
    fn assignment_coverage() {
        let dag = figure_one();
        let a = dag.current_assignment();
        assert_eq!(dag.check_assignment(&a, 100), Ok(()));
        let mut bad = a.clone();
        bad.0.remove(&1);
        assert!(dag.check_assignment(&bad, 100).is_err());
        let mut over = a;
        over.set(1, 101);
        assert!(dag.check_assignment(&over, 100).is_err());
    }
}
