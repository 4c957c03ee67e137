//! Synthetic query corpora, ground-truth profiles, source-rate schedules and
//! labeled execution histories.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bottleneck::{label_bottlenecks, BottleneckLabels, DEFAULT_THRESHOLD};
use crate::dag::*;
use crate::par::{self, Execution};
use crate::simulator::{simulate, GroundTruthProfile, OperatorProfile, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Linear,
    TwoWayJoin,
    ThreeWayJoin,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Linear, Template::TwoWayJoin, Template::ThreeWayJoin];

    pub fn name(self) -> &'static str {
        match self {
            Template::Linear => "linear",
            Template::TwoWayJoin => "two_way_join",
            Template::ThreeWayJoin => "three_way_join",
        }
    }

    pub fn source_count(self) -> usize {
        match self {
            Template::Linear => 1,
            Template::TwoWayJoin => 2,
            Template::ThreeWayJoin => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub linear: usize,
    pub two_way_join: usize,
    pub three_way_join: usize,
    /// Rate unit in records per second.
    pub rate_unit: f64,
    pub p_max: u32,
    pub scaling_exponent: f64,
    /// Upper end of the initial parallelism draw.
    pub initial_parallelism_max: u32,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            linear: 8,
            two_way_join: 16,
            three_way_join: 32,
            rate_unit: 200.0,
            p_max: 100,
            scaling_exponent: 0.9,
            initial_parallelism_max: 60,
        }
    }
}

impl CorpusSpec {
    pub fn counts(linear: usize, two_way_join: usize, three_way_join: usize) -> Self {
        CorpusSpec {
            linear,
            two_way_join,
            three_way_join,
            ..Self::default()
        }
    }

    pub fn total(&self) -> usize {
        self.linear + self.two_way_join + self.three_way_join
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub name: String,
    pub template: Template,
    pub dag: LogicalDag,
    pub profile: GroundTruthProfile,
}

impl Query {
    pub fn sources(&self) -> Vec<NodeId> {
        self.dag
            .nodes
            .iter()
            .filter(|n| n.kind == OperatorKind::Source)
            .map(|n| n.id)
            .collect()
    }

    /// Copy of the DAG with every source emitting `rate`.
    pub fn at_uniform_rate(&self, rate: f64) -> LogicalDag {
        let rates: BTreeMap<NodeId, f64> = self.sources().into_iter().map(|s| (s, rate)).collect();
        with_rates(&self.dag, &rates)
    }
}

pub fn with_rates(dag: &LogicalDag, rates: &BTreeMap<NodeId, f64>) -> LogicalDag {
    let mut dag = dag.clone();
    for (&s, &r) in rates {
        dag.set_source_rate(s, r);
    }
    dag.refresh_first_level_rates();
    dag
}

/// Generates `spec.total()` queries. Query `i` depends only on `(seed, i)`,
/// so corpora can be built in parallel and stay identical.
pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Vec<Query> {
    generate_corpus_with(Execution::default(), spec, seed)
}

pub fn generate_corpus_with(exec: Execution, spec: &CorpusSpec, seed: u64) -> Vec<Query> {
    let mut plan = Vec::with_capacity(spec.total());
    for (template, count) in [
        (Template::Linear, spec.linear),
        (Template::TwoWayJoin, spec.two_way_join),
        (Template::ThreeWayJoin, spec.three_way_join),
    ] {
        for k in 0..count {
            plan.push((template, k));
        }
    }
    par::map(exec, &plan, |&(template, k)| {
        let i = plan_index(spec, template, k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
        let dag = build_template(template, spec, &mut rng);
        let profile = draw_profile(&dag, spec, &mut rng);
        Query {
            name: format!("{}_{:02}", template.name(), k),
            template,
            dag,
            profile,
        }
    })
}

fn plan_index(spec: &CorpusSpec, template: Template, k: usize) -> usize {
    match template {
        Template::Linear => k,
        Template::TwoWayJoin => spec.linear + k,
        Template::ThreeWayJoin => spec.linear + spec.two_way_join + k,
    }
}

fn width(rng: &mut ChaCha8Rng) -> u32 {
    rng.gen_range(1..=10)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.gen_range(0..items.len())]
}

fn plain_statics(rng: &mut ChaCha8Rng, width_in: u32) -> StaticFeatures {
    StaticFeatures {
        tuple_width_in: width_in,
        tuple_width_out: width(rng),
        tuple_data_type: pick(rng, TupleDataType::ALL),
        ..StaticFeatures::default()
    }
}

fn window(rng: &mut ChaCha8Rng, s: &mut StaticFeatures) {
    s.window_type = pick(rng, &[WindowType::Tumbling, WindowType::Sliding]);
    s.window_policy = pick(rng, &[WindowPolicy::Count, WindowPolicy::Time]);
    s.window_length = f64::from(rng.gen_range(1..=60));
    s.sliding_length = match s.window_type {
        WindowType::Sliding => f64::from(rng.gen_range(1..=s.window_length as u32)),
        _ => 0.0,
    };
}

fn add_op(b: &mut DagBuilder, rng: &mut ChaCha8Rng, kind: OperatorKind, width_in: u32) -> (NodeId, u32) {
    let mut s = plain_statics(rng, width_in);
    match kind {
        OperatorKind::Join => {
            window(rng, &mut s);
            s.join_key_class = pick(rng, &JoinKeyClass::ALL[1..]);
        }
        OperatorKind::WindowAggregate => {
            window(rng, &mut s);
            s.aggregate_class = pick(rng, &AggregateClass::ALL[1..]);
            s.aggregate_key_class = pick(rng, &AggregateKeyClass::ALL[1..]);
            s.aggregate_function = pick(rng, &AggregateFunction::ALL[1..]);
            s.tuple_width_out = s.tuple_width_out.min(4);
        }
        _ => {}
    }
    let out = s.tuple_width_out;
    (b.node_with(kind, s), out)
}

/// Source followed by 0..=max_pre stateless operators; returns the tail.
fn branch(b: &mut DagBuilder, rng: &mut ChaCha8Rng, spec: &CorpusSpec, min_pre: usize, max_pre: usize) -> (NodeId, u32) {
    let rate = rng.gen_range(1.0..10.0) * spec.rate_unit;
    let src = b.source(rate);
    let mut tail = (src, width(rng));
    for _ in 0..rng.gen_range(min_pre..=max_pre) {
        let kind = pick(rng, &[OperatorKind::Filter, OperatorKind::Map, OperatorKind::FlatMap, OperatorKind::Filter]);
        let (id, out) = add_op(b, rng, kind, tail.1);
        b.edge(tail.0, id);
        tail = (id, out);
    }
    tail
}

fn build_template(template: Template, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> LogicalDag {
    let mut b = DagBuilder::new();
    let tail = match template {
        Template::Linear => branch(&mut b, rng, spec, 1, 3),
        Template::TwoWayJoin => {
            let l = branch(&mut b, rng, spec, 0, 2);
            let r = branch(&mut b, rng, spec, 0, 2);
            let (j, w) = add_op(&mut b, rng, OperatorKind::Join, l.1 + r.1);
            b.edge(l.0, j).edge(r.0, j);
            (j, w)
        }
        Template::ThreeWayJoin => {
            let a = branch(&mut b, rng, spec, 0, 1);
            let c = branch(&mut b, rng, spec, 0, 1);
            let (j1, w1) = add_op(&mut b, rng, OperatorKind::Join, a.1 + c.1);
            b.edge(a.0, j1).edge(c.0, j1);
            let d = branch(&mut b, rng, spec, 0, 2);
            let (j2, w2) = add_op(&mut b, rng, OperatorKind::Join, w1 + d.1);
            b.edge(j1, j2).edge(d.0, j2);
            (j2, w2)
        }
    };
    let (agg, w) = add_op(&mut b, rng, OperatorKind::WindowAggregate, tail.1);
    b.edge(tail.0, agg);
    let s = StaticFeatures {
        tuple_width_in: w,
        tuple_width_out: w,
        ..StaticFeatures::default()
    };
    let sink = b.node_with(OperatorKind::Sink, s);
    b.edge(agg, sink);
    let mut dag = b.build();
    for n in &mut dag.nodes {
        n.parallelism = rng.gen_range(1..=spec.initial_parallelism_max.max(1));
    }
    debug_assert!(dag.validate().is_ok());
    dag
}

/// Per-replica capacity and selectivity are mostly a function of static
/// features, with a little noise, so that an encoder can learn them.
fn draw_profile(dag: &LogicalDag, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> GroundTruthProfile {
    let mut profile = GroundTruthProfile::default();
    for n in &dag.nodes {
        if !n.kind.is_tunable() {
            continue;
        }
        let s = &n.statics;
        let width = f64::from(s.tuple_width_in.max(s.tuple_width_out)) / 10.0;
        let (cost, sel) = match n.kind {
            OperatorKind::Filter => (0.05, 0.9 - 0.06 * f64::from(s.tuple_width_out - 1)),
            OperatorKind::Map => (0.15, 1.0),
            OperatorKind::FlatMap => (0.3, 1.2 + 0.13 * f64::from(s.tuple_width_out - 1)),
            OperatorKind::Join => (0.55 + 0.004 * s.window_length, 0.5 + 0.2 * s.join_key_class.index() as f64),
            OperatorKind::WindowAggregate => {
                (0.45 + 0.004 * s.window_length, 0.05 + 0.05 * s.aggregate_function.index() as f64)
            }
            _ => unreachable!("only tunable kinds carry a profile"),
        };
        let data = if s.tuple_data_type == TupleDataType::Composite { 0.1 } else { 0.0 };
        let score: f64 = (cost + 0.25 * width + data + rng.gen_range(-0.04..0.04)).clamp(0.0, 1.0);
        let base = 50.0 * 100f64.powf(1.0 - 0.75 * score);
        let sel = (sel * rng.gen_range(0.97..1.03)).max(0.01);
        profile.insert(n.id, OperatorProfile::new(base, spec.scaling_exponent, sel));
    }
    repair_capacities(dag, spec, &mut profile);
    profile
}

/// Raises capacities where the peak offered rate (every source at ten rate
/// units) would need more than 80% of `p_max`.
fn repair_capacities(dag: &LogicalDag, spec: &CorpusSpec, profile: &mut GroundTruthProfile) {
    let peak_rates: BTreeMap<NodeId, f64> = dag
        .nodes
        .iter()
        .filter(|n| n.kind == OperatorKind::Source)
        .map(|n| (n.id, 10.0 * spec.rate_unit))
        .collect();
    let peak = with_rates(dag, &peak_rates);
    let limit = 0.8 * f64::from(spec.p_max);
    let ample: ParallelismAssignment = dag.tunable_ids().into_iter().map(|id| (id, spec.p_max)).collect();
    // Upstream repairs raise downstream offered rates, so repeat to a fixpoint.
    for _ in 0..dag.len() {
        let snap = simulate(&peak, &ample, profile).expect("generated profiles are complete");
        let mut changed = false;
        for id in dag.tunable_ids() {
            let offered = snap.get(id).expect("simulated").offered_input_rate;
            let entry = profile.0.get_mut(&id).expect("tunable ids have profiles");
            let needed = entry.base_capacity * limit.powf(entry.scaling_exponent);
            if offered > needed {
                entry.base_capacity *= offered / needed;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Periodic source-rate pattern: a basic cycle of multipliers replicated to
/// `length` entries, then `permutations` seeded shuffles of that sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub unit: f64,
    pub cycle: Vec<f64>,
    pub length: usize,
    pub permutations: usize,
}

impl Default for RateSchedule {
    fn default() -> Self {
        RateSchedule {
            unit: 200.0,
            cycle: vec![3.0, 7.0, 4.0, 2.0, 1.0, 10.0, 8.0, 5.0, 6.0, 9.0],
            length: 20,
            permutations: 6,
        }
    }
}

impl RateSchedule {
    /// Absolute rates in schedule order; the first permutation is the
    /// unshuffled sequence.
    pub fn rates(&self, seed: u64) -> Vec<f64> {
        let base: Vec<f64> = self.cycle.iter().cycle().take(self.length).map(|m| m * self.unit).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.length * self.permutations);
        for k in 0..self.permutations {
            let mut seq = base.clone();
            if k > 0 {
                seq.shuffle(&mut rng);
            }
            out.extend(seq);
        }
        out
    }
}

/// One labeled past execution of a query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub query: usize,
    pub assignment: ParallelismAssignment,
    pub source_rates: BTreeMap<NodeId, f64>,
    pub labels: BottleneckLabels,
}

impl History {
    /// The DAG exactly as it was deployed.
    pub fn materialize(&self, query: &Query) -> LogicalDag {
        let mut dag = with_rates(&query.dag, &self.source_rates);
        dag.apply_assignment(&self.assignment);
        dag
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistorySpec {
    pub runs_per_dag: usize,
    pub parallelism_max: u32,
    pub rate_unit: f64,
    pub threshold: f64,
}

impl Default for HistorySpec {
    fn default() -> Self {
        HistorySpec {
            runs_per_dag: 20,
            parallelism_max: 60,
            rate_unit: 200.0,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

pub fn generate_histories(corpus: &[Query], spec: &HistorySpec, seed: u64) -> Result<Vec<History>, SimError> {
    generate_histories_with(Execution::default(), corpus, spec, seed)
}

pub fn generate_histories_with(
    exec: Execution,
    corpus: &[Query],
    spec: &HistorySpec,
    seed: u64,
) -> Result<Vec<History>, SimError> {
    let per_query = par::map_range(exec, corpus.len(), |qi| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5851_f42d_4c95_7f2d_u64.wrapping_mul(qi as u64 + 1)));
        let q = &corpus[qi];
        let mut out = Vec::with_capacity(spec.runs_per_dag);
        for _ in 0..spec.runs_per_dag {
            let assignment: ParallelismAssignment = q
                .dag
                .tunable_ids()
                .into_iter()
                .map(|id| (id, rng.gen_range(1..=spec.parallelism_max.max(1))))
                .collect();
            let source_rates: BTreeMap<NodeId, f64> = q
                .sources()
                .into_iter()
                .map(|s| (s, rng.gen_range(1.0..10.0) * spec.rate_unit))
                .collect();
            let dag = with_rates(&q.dag, &source_rates);
            let snap = simulate(&dag, &assignment, &q.profile)?;
            let labels = label_bottlenecks(&dag, &snap, spec.threshold).expect("snapshot from the same dag");
            out.push(History {
                query: qi,
                assignment,
                source_rates,
                labels,
            });
        }
        Ok::<_, SimError>(out)
    });
    let mut all = Vec::new();
    for chunk in per_query {
        all.extend(chunk?);
    }
    Ok(all)
}

/// Random labeled DAG on `1..=max_nodes` nodes with forward edges only,
/// kinds drawn from every operator kind. Structural only: it is not
/// guaranteed to pass deployment validation.
pub fn random_structure(rng: &mut impl Rng, max_nodes: usize, edge_prob: f64) -> LogicalDag {
    let n = rng.gen_range(1..=max_nodes.max(1));
    let nodes = (0..n)
        .map(|i| OperatorNode::new(i as NodeId, OperatorKind::ALL[rng.gen_range(0..OperatorKind::ALL.len())]))
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(edge_prob) {
                edges.push((i as NodeId, j as NodeId));
            }
        }
    }
    LogicalDag::new(nodes, edges)
}
