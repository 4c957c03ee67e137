//! Exact graph edit distance between small dataflow DAGs.
//!
//! Node labels are operator kinds. The edit model has six unit-cost
//! operations: node insert/delete, edge insert/delete, operator type
//! modification and edge direction modification. Because a DAG holds at
//! most one edge between any two nodes, an unordered node pair is in one of
//! three states (no edge, forward, backward) and any mismatch between the
//! states of mapped pairs costs exactly one operation.
//!
//! [`ged`] runs a best-first search over partial node mappings with an
//! admissible lower bound; [`ged_within`] additionally prunes every branch
//! whose bound exceeds a threshold.

mod brute;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::dag::{LogicalDag, OperatorKind};
use crate::par::{self, Execution};

pub use brute::{brute_force_ged, BRUTE_FORCE_MAX_NODES};

/// Image in the second graph of every node of the first, `None` if deleted.
type Mapping = Vec<Option<usize>>;
/// Search queue key: bound, deeper first, insertion order, arena index.
type QueueKey = (u32, Reverse<u8>, u64, u32);

/// Largest graph accepted by the exact search.
pub const MAX_GED_NODES: usize = 16;

const EPSILON: u8 = u8::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GedError {
    #[error("graph has {size} nodes, the limit is {limit}")]
    SizeLimitExceeded { size: usize, limit: usize },
    #[error("empty graph collection")]
    EmptyCorpus,
}

/// Labeled digraph in position space, the form every routine here uses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    pub labels: Vec<OperatorKind>,
    /// `adj[i][j]` is true when there is an edge `i -> j`.
    pub adj: Vec<Vec<bool>>,
}

impl LabeledGraph {
    pub fn from_dag(dag: &LogicalDag) -> Self {
        let adjacency = dag.adjacency();
        let n = dag.nodes.len();
        let mut adj = vec![vec![false; n]; n];
        for (u, succs) in adjacency.succs.iter().enumerate() {
            for &v in succs {
                adj[u][v] = true;
            }
        }
        LabeledGraph {
            labels: dag.nodes.iter().map(|n| n.kind).collect(),
            adj,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pair state: 0 no edge, 1 `i -> j`, 2 `j -> i`.
    fn pair(&self, i: usize, j: usize) -> u8 {
        if self.adj[i][j] {
            1
        } else if self.adj[j][i] {
            2
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GedResult {
    pub distance: u32,
    pub expanded_states: u64,
    /// For every node of the first graph (by position), its image in the
    /// second graph or `None` when it is deleted.
    pub optimal_mapping: Vec<Option<usize>>,
}

/// Outcome of a threshold-bounded search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundedGed {
    /// `Some(d)` with the exact distance when `d <= tau`.
    pub distance: Option<u32>,
    pub expanded_states: u64,
}

/// One step of an edit script. Node handles are positions in the first
/// graph; inserted nodes get handles `n1, n1 + 1, ...`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOperation {
    NodeInsert { node: usize, kind: OperatorKind },
    NodeDelete { node: usize },
    EdgeInsert { from: usize, to: usize },
    EdgeDelete { from: usize, to: usize },
    OperatorTypeModify { node: usize, kind: OperatorKind },
    EdgeDirectionModify { from: usize, to: usize },
}

impl EditOperation {
    pub fn cost(&self) -> u32 {
        1
    }
}

fn check_size(g: &LabeledGraph, limit: usize) -> Result<(), GedError> {
    if g.len() > limit {
        Err(GedError::SizeLimitExceeded {
            size: g.len(),
            limit,
        })
    } else {
        Ok(())
    }
}

/// Exact edit distance between two DAGs.
pub fn ged(g1: &LogicalDag, g2: &LogicalDag) -> Result<GedResult, GedError> {
    ged_graphs(&LabeledGraph::from_dag(g1), &LabeledGraph::from_dag(g2))
}

pub fn ged_graphs(g1: &LabeledGraph, g2: &LabeledGraph) -> Result<GedResult, GedError> {
    let search = Search::new(g1, g2)?;
    let (found, expanded) = search.run(None);
    let (distance, mapping) = found.expect("unbounded search always reaches a goal");
    Ok(GedResult {
        distance,
        expanded_states: expanded,
        optimal_mapping: mapping,
    })
}

/// Edit distance if it does not exceed `tau`.
pub fn ged_within(g1: &LogicalDag, g2: &LogicalDag, tau: u32) -> Result<BoundedGed, GedError> {
    ged_within_graphs(&LabeledGraph::from_dag(g1), &LabeledGraph::from_dag(g2), tau)
}

pub fn ged_within_graphs(
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    tau: u32,
) -> Result<BoundedGed, GedError> {
    let search = Search::new(g1, g2)?;
    let (found, expanded) = search.run(Some(tau));
    Ok(BoundedGed {
        distance: found.map(|(d, _)| d),
        expanded_states: expanded,
    })
}

/// Cost of the complete edit path induced by `mapping`.
pub fn mapping_cost(g1: &LabeledGraph, g2: &LabeledGraph, mapping: &[Option<usize>]) -> u32 {
    edit_script(g1, g2, mapping).len() as u32
}

/// The edit operations induced by a complete node mapping.
pub fn edit_script(
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    mapping: &[Option<usize>],
) -> Vec<EditOperation> {
    let n1 = g1.len();
    let mut image_of = vec![None; g2.len()];
    for (u, m) in mapping.iter().enumerate() {
        if let Some(v) = m {
            image_of[*v] = Some(u);
        }
    }
    // Handles in the edited graph for every node of g2.
    let mut handle = vec![0usize; g2.len()];
    let mut inserted = Vec::new();
    for v in 0..g2.len() {
        match image_of[v] {
            Some(u) => handle[v] = u,
            None => {
                handle[v] = n1 + inserted.len();
                inserted.push(v);
            }
        }
    }

    let mut ops = Vec::new();
    for (a, row) in g1.adj.iter().enumerate() {
        for (b, &e) in row.iter().enumerate() {
            if e && (mapping[a].is_none() || mapping[b].is_none()) {
                ops.push(EditOperation::EdgeDelete { from: a, to: b });
            }
        }
    }
    for a in 0..n1 {
        for b in (a + 1)..n1 {
            let (Some(x), Some(y)) = (mapping[a], mapping[b]) else {
                continue;
            };
            let s1 = g1.pair(a, b);
            let s2 = g2.pair(x, y);
            match (s1, s2) {
                (l, r) if l == r => {}
                (1, 0) => ops.push(EditOperation::EdgeDelete { from: a, to: b }),
                (2, 0) => ops.push(EditOperation::EdgeDelete { from: b, to: a }),
                (1, 2) => ops.push(EditOperation::EdgeDirectionModify { from: a, to: b }),
                (2, 1) => ops.push(EditOperation::EdgeDirectionModify { from: b, to: a }),
                _ => {}
            }
        }
    }
    for (u, m) in mapping.iter().enumerate() {
        match m {
            None => ops.push(EditOperation::NodeDelete { node: u }),
            Some(v) if g1.labels[u] != g2.labels[*v] => ops.push(EditOperation::OperatorTypeModify {
                node: u,
                kind: g2.labels[*v],
            }),
            _ => {}
        }
    }
    for &v in &inserted {
        ops.push(EditOperation::NodeInsert {
            node: handle[v],
            kind: g2.labels[v],
        });
    }
    for x in 0..g2.len() {
        for y in 0..g2.len() {
            if !g2.adj[x][y] {
                continue;
            }
            let new_edge = match (image_of[x], image_of[y]) {
                (Some(a), Some(b)) => g1.pair(a.min(b), a.max(b)) == 0,
                _ => true,
            };
            if new_edge {
                ops.push(EditOperation::EdgeInsert {
                    from: handle[x],
                    to: handle[y],
                });
            }
        }
    }
    ops
}

/// Appearance-count argmax over a cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarityCenter {
    pub index: usize,
    pub count: usize,
    pub counts: Vec<usize>,
}

/// Indices of corpus graphs within edit distance `tau` of `query`.
pub fn similarity_search(query: &LogicalDag, corpus: &[LogicalDag], tau: u32) -> Result<Vec<usize>, GedError> {
    similarity_search_with(Execution::default(), query, corpus, tau)
}

pub fn similarity_search_with(
    exec: Execution,
    query: &LogicalDag,
    corpus: &[LogicalDag],
    tau: u32,
) -> Result<Vec<usize>, GedError> {
    let q = LabeledGraph::from_dag(query);
    let graphs: Vec<LabeledGraph> = corpus.iter().map(LabeledGraph::from_dag).collect();
    let hits = par::map(exec, &graphs, |g| ged_within_graphs(&q, g, tau));
    let mut out = Vec::new();
    for (i, hit) in hits.into_iter().enumerate() {
        if hit?.distance.is_some() {
            out.push(i);
        }
    }
    Ok(out)
}

/// The member that shows up in the most threshold-`tau` similarity
/// searches of the cluster; ties go to the lowest index.
pub fn similarity_center(cluster: &[LogicalDag], tau: u32) -> Result<SimilarityCenter, GedError> {
    let graphs: Vec<LabeledGraph> = cluster.iter().map(LabeledGraph::from_dag).collect();
    similarity_center_graphs(Execution::default(), &graphs, tau)
}

pub fn similarity_center_graphs(
    exec: Execution,
    graphs: &[LabeledGraph],
    tau: u32,
) -> Result<SimilarityCenter, GedError> {
    if graphs.is_empty() {
        return Err(GedError::EmptyCorpus);
    }
    let n = graphs.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let within = par::map(exec, &pairs, |&(i, j)| {
        ged_within_graphs(&graphs[i], &graphs[j], tau).map(|r| r.distance.is_some())
    });
    let mut counts = vec![1usize; n];
    for (&(i, j), hit) in pairs.iter().zip(within) {
        if hit? {
            counts[i] += 1;
            counts[j] += 1;
        }
    }
    let mut index = 0;
    for i in 1..n {
        if counts[i] > counts[index] {
            index = i;
        }
    }
    Ok(SimilarityCenter {
        index,
        count: counts[index],
        counts,
    })
}

#[derive(Clone, Copy)]
struct StateNode {
    parent: u32,
    target: u8,
    depth: u8,
    g: u32,
    used: u32,
}

struct Search<'a> {
    g1: &'a LabeledGraph,
    g2: &'a LabeledGraph,
    /// Processing order of g1 nodes.
    order: Vec<usize>,
    /// Edges of g1 whose later endpoint (in `order`) sits at each depth.
    g1_edges_from_depth: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(g1: &'a LabeledGraph, g2: &'a LabeledGraph) -> Result<Self, GedError> {
        check_size(g1, MAX_GED_NODES)?;
        check_size(g2, MAX_GED_NODES)?;
        let n1 = g1.len();
        let degree = |u: usize| (0..n1).filter(|&w| g1.pair(u, w) != 0).count();
        let mut order: Vec<usize> = (0..n1).collect();
        order.sort_by_key(|&u| (Reverse(degree(u)), u));

        // g1_edges_from_depth[k] = number of g1 edges with an endpoint among
        // order[k..], i.e. edges not yet fully costed after k assignments.
        let mut rank = vec![0usize; n1];
        for (k, &u) in order.iter().enumerate() {
            rank[u] = k;
        }
        let mut g1_edges_from_depth = vec![0usize; n1 + 1];
        for a in 0..n1 {
            for b in 0..n1 {
                if g1.adj[a][b] {
                    let later = rank[a].max(rank[b]);
                    for slot in g1_edges_from_depth.iter_mut().take(later + 1) {
                        *slot += 1;
                    }
                }
            }
        }
        Ok(Search {
            g1,
            g2,
            order,
            g1_edges_from_depth,
        })
    }

    fn prefix(&self, arena: &[StateNode], mut idx: u32, out: &mut Vec<u8>) {
        out.clear();
        loop {
            let s = arena[idx as usize];
            if s.depth == 0 {
                break;
            }
            out.push(s.target);
            idx = s.parent;
        }
        out.reverse();
    }

    /// Cost added by assigning the g1 node at `depth` to `target`, given the
    /// targets of all earlier nodes.
    fn step_cost(&self, prefix: &[u8], depth: usize, target: u8) -> u32 {
        let u = self.order[depth];
        let mut cost = if target == EPSILON {
            1
        } else {
            u32::from(self.g1.labels[u] != self.g2.labels[target as usize])
        };
        for (j, &tj) in prefix.iter().enumerate() {
            let w = self.order[j];
            let s1 = self.g1.pair(u, w);
            if target == EPSILON || tj == EPSILON {
                cost += u32::from(s1 != 0);
            } else {
                let s2 = self.g2.pair(target as usize, tj as usize);
                cost += u32::from(s1 != s2);
            }
        }
        cost
    }

    /// Cost of inserting every unused g2 node and the g2 edges touching them.
    fn completion_cost(&self, used: u32) -> u32 {
        let n2 = self.g2.len();
        let mut cost = 0;
        for v in 0..n2 {
            if used & (1 << v) == 0 {
                cost += 1;
            }
        }
        for x in 0..n2 {
            for y in 0..n2 {
                if self.g2.adj[x][y] && (used & (1 << x) == 0 || used & (1 << y) == 0) {
                    cost += 1;
                }
            }
        }
        cost
    }

    fn lower_bound(&self, depth: usize, used: u32) -> u32 {
        let n2 = self.g2.len();
        let mut hist = [0i32; 7];
        let mut r1 = 0i32;
        for &u in &self.order[depth..] {
            hist[self.g1.labels[u].index()] += 1;
            r1 += 1;
        }
        let mut common = 0i32;
        let mut r2 = 0i32;
        let mut g2_remaining = 0usize;
        for v in 0..n2 {
            if used & (1 << v) == 0 {
                r2 += 1;
                let l = self.g2.labels[v].index();
                if hist[l] > 0 {
                    hist[l] -= 1;
                    common += 1;
                }
            }
        }
        for x in 0..n2 {
            for y in 0..n2 {
                if self.g2.adj[x][y] && (used & (1 << x) == 0 || used & (1 << y) == 0) {
                    g2_remaining += 1;
                }
            }
        }
        let node_lb = r1.max(r2) - common;
        let g1_remaining = self.g1_edges_from_depth[depth];
        let edge_lb = g1_remaining.abs_diff(g2_remaining);
        node_lb as u32 + edge_lb as u32
    }

    /// Greedy complete mapping, used as the initial upper bound.
    fn greedy_upper_bound(&self) -> u32 {
        let mut prefix = Vec::new();
        let mut used = 0u32;
        let mut g = 0;
        for depth in 0..self.order.len() {
            let mut best = (self.step_cost(&prefix, depth, EPSILON), EPSILON);
            for t in 0..self.g2.len() {
                if used & (1 << t) == 0 {
                    let c = self.step_cost(&prefix, depth, t as u8);
                    if c < best.0 {
                        best = (c, t as u8);
                    }
                }
            }
            g += best.0;
            if best.1 != EPSILON {
                used |= 1 << best.1;
            }
            prefix.push(best.1);
        }
        g + self.completion_cost(used)
    }

    /// Best-first search. With `tau`, branches whose bound exceeds it are
    /// never queued and `None` means the distance exceeds `tau`.
    fn run(&self, tau: Option<u32>) -> (Option<(u32, Mapping)>, u64) {
        let n1 = self.order.len();
        let n2 = self.g2.len();
        let upper = self.greedy_upper_bound();
        let bound = tau.map_or(upper, |t| t.min(upper));

        let mut arena = vec![StateNode {
            parent: 0,
            target: 0,
            depth: 0,
            g: 0,
            used: 0,
        }];
        // Key: (f, deeper first, insertion order).
        let mut heap: BinaryHeap<Reverse<QueueKey>> = BinaryHeap::new();
        let mut seq = 0u64;
        let root_f = if n1 == 0 {
            self.completion_cost(0)
        } else {
            self.lower_bound(0, 0)
        };
        if root_f <= bound {
            heap.push(Reverse((root_f, Reverse(0), seq, 0)));
        }
        let mut expanded = 0u64;
        let mut prefix = Vec::with_capacity(n1);

        while let Some(Reverse((f, _, _, idx))) = heap.pop() {
            expanded += 1;
            let state = arena[idx as usize];
            let depth = state.depth as usize;
            if depth == n1 {
                self.prefix(&arena, idx, &mut prefix);
                let mut mapping = vec![None; n1];
                for (k, &t) in prefix.iter().enumerate() {
                    if t != EPSILON {
                        mapping[self.order[k]] = Some(t as usize);
                    }
                }
                return (Some((f, mapping)), expanded);
            }
            self.prefix(&arena, idx, &mut prefix);
            let targets = (0..n2 as u8)
                .filter(|&t| state.used & (1 << t) == 0)
                .chain(std::iter::once(EPSILON));
            for t in targets {
                let used = if t == EPSILON {
                    state.used
                } else {
                    state.used | (1 << t)
                };
                let mut g = state.g + self.step_cost(&prefix, depth, t);
                let child_depth = depth + 1;
                let h = if child_depth == n1 {
                    g += self.completion_cost(used);
                    0
                } else {
                    self.lower_bound(child_depth, used)
                };
                let f = g + h;
                if f > bound {
                    continue;
                }
                arena.push(StateNode {
                    parent: idx,
                    target: t,
                    depth: child_depth as u8,
                    g,
                    used,
                });
                seq += 1;
                heap.push(Reverse((
                    f,
                    Reverse(child_depth as u8),
                    seq,
                    (arena.len() - 1) as u32,
                )));
            }
        }
        (None, expanded)
    }
}
