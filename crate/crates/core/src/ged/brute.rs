//! Exhaustive edit distance for tiny graphs, used as a test oracle.
//!
//! Enumerates every partial injection from the first graph into the second
//! and costs it directly in the second graph's node space, sharing no code
//! with the search.

use super::{check_size, GedError, LabeledGraph};

pub const BRUTE_FORCE_MAX_NODES: usize = 6;

pub fn brute_force_ged(g1: &LabeledGraph, g2: &LabeledGraph) -> Result<u32, GedError> {
    check_size(g1, BRUTE_FORCE_MAX_NODES)?;
    check_size(g2, BRUTE_FORCE_MAX_NODES)?;
    let mut phi = vec![None; g1.len()];
    let mut taken = vec![false; g2.len()];
    let mut best = u32::MAX;
    enumerate(g1, g2, 0, &mut phi, &mut taken, &mut best);
    Ok(best)
}

fn enumerate(
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    u: usize,
    phi: &mut Vec<Option<usize>>,
    taken: &mut Vec<bool>,
    best: &mut u32,
) {
    if u == g1.len() {
        *best = (*best).min(cost(g1, g2, phi));
        return;
    }
    phi[u] = None;
    enumerate(g1, g2, u + 1, phi, taken, best);
    for v in 0..g2.len() {
        if !taken[v] {
            taken[v] = true;
            phi[u] = Some(v);
            enumerate(g1, g2, u + 1, phi, taken, best);
            taken[v] = false;
        }
    }
    phi[u] = None;
}

fn cost(g1: &LabeledGraph, g2: &LabeledGraph, phi: &[Option<usize>]) -> u32 {
    let n2 = g2.len();
    let mut total = 0u32;

    // Node deletions, substitutions and insertions.
    let mut hit = vec![false; n2];
    for (u, m) in phi.iter().enumerate() {
        match m {
            None => total += 1,
            Some(v) => {
                hit[*v] = true;
                if g1.labels[u] != g2.labels[*v] {
                    total += 1;
                }
            }
        }
    }
    total += hit.iter().filter(|h| !**h).count() as u32;

    // Carry surviving g1 edges into g2 space; edges on deleted nodes go.
    let mut carried = vec![vec![false; n2]; n2];
    for (a, row) in g1.adj.iter().enumerate() {
        for (b, &e) in row.iter().enumerate() {
            if !e {
                continue;
            }
            match (phi[a], phi[b]) {
                (Some(x), Some(y)) => carried[x][y] = true,
                _ => total += 1,
            }
        }
    }

    // Compare each unordered pair of g2 nodes in both graphs.
    for x in 0..n2 {
        for y in (x + 1)..n2 {
            let have = (carried[x][y], carried[y][x]);
            let want = (g2.adj[x][y], g2.adj[y][x]);
            if have != want {
                total += 1;
            }
        }
    }
    total
}
