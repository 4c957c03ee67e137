//! K-means-style clustering of DAGs under edit distance, with similarity
//! centers as medoid surrogates.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::LogicalDag;
use crate::ged::{ged_graphs, GedError, LabeledGraph};
use crate::par::{self, Execution};

pub const DEFAULT_TAU: u32 = 5;
pub const DEFAULT_MAX_ITER: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("k = {k} exceeds the corpus size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k and max_iter must be positive")]
    ZeroParameter,
    #[error(transparent)]
    Ged(#[from] GedError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub tau: u32,
    /// Corpus index of each cluster's center.
    pub center_dag_ids: Vec<usize>,
    /// Cluster id of every corpus DAG.
    pub membership: Vec<usize>,
    pub objective_history: Vec<u64>,
    pub centers: Vec<LogicalDag>,
}

impl ClusterModel {
    pub fn objective(&self) -> u64 {
        self.objective_history.last().copied().unwrap_or(0)
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.membership.len())
            .filter(|&i| self.membership[i] == cluster)
            .collect()
    }
}

/// Symmetric matrix of exact pairwise edit distances.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

impl DistanceMatrix {
    pub fn compute(exec: Execution, corpus: &[LogicalDag]) -> Result<Self, GedError> {
        let graphs: Vec<LabeledGraph> = corpus.iter().map(LabeledGraph::from_dag).collect();
        let n = graphs.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let dists = par::map(exec, &pairs, |&(i, j)| ged_graphs(&graphs[i], &graphs[j]).map(|r| r.distance));
        let mut d = vec![0; n * n];
        for (&(i, j), dist) in pairs.iter().zip(dists) {
            let dist = dist?;
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
        Ok(DistanceMatrix { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.n + j]
    }
}

pub fn kmeans_ged(corpus: &[LogicalDag], k: usize, max_iter: usize, seed: u64) -> Result<ClusterModel, ClusterError> {
    kmeans_ged_with(Execution::default(), corpus, k, max_iter, seed, DEFAULT_TAU)
}

pub fn kmeans_ged_with(
    exec: Execution,
    corpus: &[LogicalDag],
    k: usize,
    max_iter: usize,
    seed: u64,
    tau: u32,
) -> Result<ClusterModel, ClusterError> {
    check_k(k, max_iter, corpus.len())?;
    let dm = DistanceMatrix::compute(exec, corpus)?;
    Ok(kmeans_on_matrix(&dm, corpus, k, max_iter, seed, tau))
}

fn check_k(k: usize, max_iter: usize, n: usize) -> Result<(), ClusterError> {
    if k == 0 || max_iter == 0 {
        return Err(ClusterError::ZeroParameter);
    }
    if k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    Ok(())
}

/// Nearest center for every DAG, lowest cluster id on ties.
fn assign(dm: &DistanceMatrix, centers: &[usize]) -> (Vec<usize>, u64) {
    let mut membership = Vec::with_capacity(dm.len());
    let mut objective = 0u64;
    for i in 0..dm.len() {
        let (c, d) = centers
            .iter()
            .enumerate()
            .map(|(c, &m)| (c, dm.get(i, m)))
            .min_by_key(|&(c, d)| (d, c))
            .expect("at least one center");
        membership.push(c);
        objective += u64::from(d);
    }
    (membership, objective)
}

/// Gives every empty cluster the DAG farthest from its current center.
/// Duplicate graphs can keep a cluster empty, so attempts are bounded.
fn repair_empty(dm: &DistanceMatrix, centers: &mut [usize]) -> (Vec<usize>, u64) {
    let mut result = assign(dm, centers);
    for _ in 0..dm.len() {
        let membership = &result.0;
        let Some(empty) = (0..centers.len()).find(|c| !membership.contains(c)) else {
            break;
        };
        let far = (0..dm.len())
            .filter(|i| !centers.contains(i))
            .max_by_key(|&i| (dm.get(i, centers[membership[i]]), std::cmp::Reverse(i)));
        let Some(far) = far else {
            break;
        };
        centers[empty] = far;
        result = assign(dm, centers);
    }
    result
}

/// Member with the most members within `tau`, lowest corpus index on ties.
fn center_of(dm: &DistanceMatrix, members: &[usize], tau: u32) -> usize {
    let mut best = (0usize, usize::MAX);
    for &g in members {
        let count = members.iter().filter(|&&h| dm.get(g, h) <= tau).count();
        if best.1 == usize::MAX || count > best.0 {
            best = (count, g);
        }
    }
    best.1
}

pub fn kmeans_on_matrix(
    dm: &DistanceMatrix,
    corpus: &[LogicalDag],
    k: usize,
    max_iter: usize,
    seed: u64,
    tau: u32,
) -> ClusterModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<usize> = sample(&mut rng, dm.len(), k).into_vec();
    centers.sort_unstable();
    let mut history = Vec::new();
    let mut membership;
    let mut iter = 0;
    loop {
        let (m, objective) = repair_empty(dm, &mut centers);
        membership = m;
        history.push(objective);
        iter += 1;
        if iter >= max_iter {
            break;
        }
        let updated: Vec<usize> = (0..k)
            .map(|c| {
                let members: Vec<usize> = (0..dm.len()).filter(|&i| membership[i] == c).collect();
                if members.is_empty() {
                    centers[c]
                } else {
                    center_of(dm, &members, tau)
                }
            })
            .collect();
        if updated == centers {
            break;
        }
        centers = updated;
    }
    log::debug!("k={k}: {iter} iterations, objective {:?}", history.last());
    ClusterModel {
        k,
        tau,
        centers: centers.iter().map(|&c| corpus[c].clone()).collect(),
        center_dag_ids: centers,
        membership,
        objective_history: history,
    }
}

/// Cluster whose center is closest to `dag`, lowest id on ties.
pub fn assign_to_nearest(dag: &LogicalDag, model: &ClusterModel) -> Result<usize, GedError> {
    let g = LabeledGraph::from_dag(dag);
    let mut best = (u32::MAX, 0usize);
    for (c, center) in model.centers.iter().enumerate() {
        let d = ged_graphs(&g, &LabeledGraph::from_dag(center))?.distance;
        if d < best.0 {
            best = (d, c);
        }
    }
    Ok(best.1)
}

/// Final objective for every `k` in `ks`; the distance matrix is shared.
pub fn elbow_scan(
    corpus: &[LogicalDag],
    ks: &[usize],
    seed: u64,
    max_iter: usize,
    tau: u32,
) -> Result<Vec<(usize, u64)>, ClusterError> {
    for &k in ks {
        check_k(k, max_iter, corpus.len())?;
    }
    let dm = DistanceMatrix::compute(Execution::default(), corpus)?;
    Ok(ks
        .iter()
        .map(|&k| (k, kmeans_on_matrix(&dm, corpus, k, max_iter, seed, tau).objective()))
        .collect())
}
