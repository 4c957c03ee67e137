//! Initial operator feature vectors: one-hot blocks for every closed
//! vocabulary followed by min-max scaled numerics.

use serde::{Deserialize, Serialize};

use crate::dag::*;

pub const NUMERIC_FEATURES: [&str; 5] = [
    "window_length",
    "sliding_length",
    "tuple_width_in",
    "tuple_width_out",
    "source_rate",
];

/// Width of the one-hot part.
pub const CATEGORICAL_DIM: usize = OperatorKind::ALL.len()
    + WindowType::ALL.len()
    + WindowPolicy::ALL.len()
    + JoinKeyClass::ALL.len()
    + AggregateClass::ALL.len()
    + AggregateKeyClass::ALL.len()
    + AggregateFunction::ALL.len()
    + TupleDataType::ALL.len();

pub const INPUT_DIM: usize = CATEGORICAL_DIM + NUMERIC_FEATURES.len();

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    /// `(min, max)` per entry of [`NUMERIC_FEATURES`].
    pub bounds: Vec<(f64, f64)>,
}

fn numerics(node: &OperatorNode) -> [f64; 5] {
    let s = &node.statics;
    [
        s.window_length,
        s.sliding_length,
        f64::from(s.tuple_width_in),
        f64::from(s.tuple_width_out),
        node.source_rate,
    ]
}

impl FeatureEncoding {
    /// Bounds spanning every node of `dags`.
    pub fn fit<'a>(dags: impl IntoIterator<Item = &'a LogicalDag>) -> Self {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); NUMERIC_FEATURES.len()];
        for dag in dags {
            for n in &dag.nodes {
                for (b, v) in bounds.iter_mut().zip(numerics(n)) {
                    b.0 = b.0.min(v);
                    b.1 = b.1.max(v);
                }
            }
        }
        for b in &mut bounds {
            if !b.0.is_finite() {
                *b = (0.0, 0.0);
            }
        }
        FeatureEncoding { bounds }
    }

    /// Parallelism is deliberately not an input here.
    pub fn encode(&self, node: &OperatorNode) -> Vec<f64> {
        let s = &node.statics;
        let mut v = vec![0.0; INPUT_DIM];
        let mut offset = 0;
        let mut hot = |index: usize, width: usize| {
            v[offset + index] = 1.0;
            offset += width;
        };
        hot(node.kind.index(), OperatorKind::ALL.len());
        hot(s.window_type.index(), WindowType::ALL.len());
        hot(s.window_policy.index(), WindowPolicy::ALL.len());
        hot(s.join_key_class.index(), JoinKeyClass::ALL.len());
        hot(s.aggregate_class.index(), AggregateClass::ALL.len());
        hot(s.aggregate_key_class.index(), AggregateKeyClass::ALL.len());
        hot(s.aggregate_function.index(), AggregateFunction::ALL.len());
        hot(s.tuple_data_type.index(), TupleDataType::ALL.len());
        for (k, (&(lo, hi), x)) in self.bounds.iter().zip(numerics(node)).enumerate() {
            v[CATEGORICAL_DIM + k] = if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        }
        v
    }
}
