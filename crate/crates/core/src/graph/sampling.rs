//! Ground-truth query sampling by a revisit-biased random walk.
//!
//! At every walk step the next node is drawn from the current node's
//! neighbors with raw weight `1/p` for already-selected nodes and `p` for new
//! ones. Small `p` keeps the walk bouncing around its start (star-like
//! queries); large `p` pushes it outward (path-like queries).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LabeledGraph, NodeId};

/// Restarts allowed before sampling gives up.
pub const RESTART_BUDGET: usize = 100;
/// Walk steps allowed within one restart.
const WALK_STEP_CAP: u64 = 200_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("cannot sample a query with zero nodes")]
    EmptyQuery,
    #[error("target has {have} nodes, fewer than the requested {want}")]
    TargetTooSmall { have: usize, want: usize },
    #[error("p must be positive and finite, got {0}")]
    BadP(f64),
    #[error("walk failed to reach {want} nodes within {RESTART_BUDGET} restarts")]
    RetriesExhausted { want: usize },
    #[error("p schedule needs at least two entries and 1 <= i <= n (got i={i}, n={n})")]
    BadSchedule { i: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledQuery {
    pub query: LabeledGraph,
    /// `truth_mapping[u]` is the target node query node `u` was sampled from.
    pub truth_mapping: Vec<NodeId>,
    pub p_value: f64,
    pub seed: u64,
}

/// Log-uniform sweep of `p` from `0.001` (i = 1) to `1000` (i = n).
pub fn p_schedule(i: usize, n: usize) -> Result<f64, SampleError> {
    if n < 2 || i == 0 || i > n {
        return Err(SampleError::BadSchedule { i, n });
    }
    let exponent = -3.0 + 6.0 * (i - 1) as f64 / (n - 1) as f64;
    Ok(10f64.powf(exponent))
}

/// Samples an `n`-node connected query from `g`; query edges are every
/// target edge among the selected nodes.
pub fn random_walk_sample(
    g: &LabeledGraph,
    n: usize,
    p: f64,
    seed: u64,
) -> Result<SampledQuery, SampleError> {
    if n == 0 {
        return Err(SampleError::EmptyQuery);
    }
    if !(p.is_finite() && p > 0.0) {
        return Err(SampleError::BadP(p));
    }
    if g.num_nodes() < n {
        return Err(SampleError::TargetTooSmall { have: g.num_nodes(), want: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_old = 1.0 / p;
    let w_new = p;

    let mut selected = vec![false; g.num_nodes()];
    // Number of selected neighbors per node, kept in sync with `selected`.
    let mut sel_nbrs = vec![0u32; g.num_nodes()];

    for _ in 0..RESTART_BUDGET {
        let start = rng.gen_range(0..g.num_nodes());
        if component_size_at_least(g, start, n) {
            let mut order = vec![start];
            mark(g, start, &mut selected, &mut sel_nbrs);
            let mut current = start;
            let mut steps = 0u64;
            while order.len() < n && steps < WALK_STEP_CAP {
                steps += 1;
                let nbrs = g.neighbors(current);
                let old = sel_nbrs[current] as f64;
                let new = nbrs.len() as f64 - old;
                let take_new = rng.gen::<f64>() * (old * w_old + new * w_new) < new * w_new;
                // Rejection-sample a neighbor from the chosen group.
                let next = loop {
                    let cand = nbrs[rng.gen_range(0..nbrs.len())];
                    if selected[cand] != take_new {
                        break cand;
                    }
                };
                if take_new {
                    mark(g, next, &mut selected, &mut sel_nbrs);
                    order.push(next);
                }
                current = next;
            }
            if order.len() == n {
                return Ok(build_query(g, order, p, seed));
            }
            for &u in &order {
                unmark(g, u, &mut selected, &mut sel_nbrs);
            }
        }
    }
    Err(SampleError::RetriesExhausted { want: n })
}

fn mark(g: &LabeledGraph, u: NodeId, selected: &mut [bool], sel_nbrs: &mut [u32]) {
    selected[u] = true;
    for &w in g.neighbors(u) {
        sel_nbrs[w] += 1;
    }
}

fn unmark(g: &LabeledGraph, u: NodeId, selected: &mut [bool], sel_nbrs: &mut [u32]) {
    selected[u] = false;
    for &w in g.neighbors(u) {
        sel_nbrs[w] -= 1;
    }
}

fn component_size_at_least(g: &LabeledGraph, start: NodeId, n: usize) -> bool {
    let mut seen = std::collections::HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        if seen.len() >= n {
            return true;
        }
        for &w in g.neighbors(u) {
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() >= n
}

fn build_query(g: &LabeledGraph, order: Vec<NodeId>, p: f64, seed: u64) -> SampledQuery {
    let index: std::collections::HashMap<NodeId, NodeId> =
        order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut edges = Vec::new();
    for (qi, &v) in order.iter().enumerate() {
        for w in g.neighbors(v) {
            if let Some(&qj) = index.get(w) {
                if qi < qj {
                    edges.push((qi, qj));
                }
            }
        }
    }
    let labels = order.iter().map(|&v| g.label(v)).collect();
    let query = LabeledGraph::from_edges(labels, &edges).expect("induced edges are simple");
    SampledQuery {
        query,
        truth_mapping: order,
        p_value: p,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synth::preferential_attachment;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(p_schedule(1, 50).unwrap(), 0.001);
        assert_eq!(p_schedule(50, 50).unwrap(), 1000.0);
        assert!((p_schedule(49, 50).unwrap() - 754.312).abs() < 1e-3);
        assert!((p_schedule(2, 50).unwrap() - 0.00133).abs() < 5e-6);
        assert!(p_schedule(1, 1).is_err());
        assert!(p_schedule(0, 5).is_err());
    }

    #[test]
    fn schedule_is_geometric() {
        let ps: Vec<f64> = (1..=50).map(|i| p_schedule(i, 50).unwrap()).collect();
        let ratio = ps[1] / ps[0];
        for w in ps.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn single_node_query() {
        let g = preferential_attachment(50, 2, 3, 1);
        let s = random_walk_sample(&g, 1, 1.0, 9).unwrap();
        assert_eq!(s.query.num_nodes(), 1);
        assert_eq!(s.query.label(0), g.label(s.truth_mapping[0]));
    }

    #[test]
    fn sampled_queries_are_connected_and_deterministic() {
        let g = preferential_attachment(200, 3, 4, 5);
        for seed in 0..20 {
            let a = random_walk_sample(&g, 12, 0.5 + seed as f64, seed).unwrap();
            let b = random_walk_sample(&g, 12, 0.5 + seed as f64, seed).unwrap();
            assert_eq!(a, b);
            assert!(a.query.is_connected());
            let mut targets = a.truth_mapping.clone();
            targets.sort_unstable();
            targets.dedup();
            assert_eq!(targets.len(), 12);
        }
    }

    #[test]
    fn tiny_components_exhaust_retries() {
        let g = LabeledGraph::from_edges(vec![0; 4], &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(
            random_walk_sample(&g, 3, 1.0, 0),
            Err(SampleError::RetriesExhausted { want: 3 })
        );
        assert_eq!(random_walk_sample(&g, 0, 1.0, 0), Err(SampleError::EmptyQuery));
        assert!(matches!(random_walk_sample(&g, 2, -1.0, 0), Err(SampleError::BadP(_))));
    }
}
