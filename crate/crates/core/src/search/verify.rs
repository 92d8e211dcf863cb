//! Independent referees for the search engine. Nothing here reuses the
//! filtering, ordering, or local-candidate code paths.

use crate::graph::{Label, LabeledGraph, NodeId};

/// Soft size limits past which the oracle gets slow.
pub const ORACLE_MAX_QUERY: usize = 8;
pub const ORACLE_MAX_TARGET: usize = 20;

/// True iff `m` is an injective, label-preserving map of `q` into `g` that
/// preserves every query edge (non-induced semantics).
pub fn verify_match(q: &LabeledGraph, g: &LabeledGraph, m: &[NodeId]) -> bool {
    if m.len() != q.num_nodes() {
        return false;
    }
    let mut seen = std::collections::HashSet::with_capacity(m.len());
    for (u, &v) in m.iter().enumerate() {
        if v >= g.num_nodes() || !seen.insert(v) || q.label(u) != g.label(v) {
            return false;
        }
    }
    q.edges().all(|(a, b)| g.neighbors(m[a]).contains(&m[b]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// Every match, sorted lexicographically.
    pub matches: Vec<Vec<NodeId>>,
    /// Set when the inputs exceed the recommended oracle size.
    pub oversized: bool,
}

impl OracleResult {
    pub fn count(&self) -> usize {
        self.matches.len()
    }
}

/// Exhaustive enumeration of injective label-preserving assignments in query
/// id order; each complete assignment is checked with [`verify_match`].
pub fn brute_force_oracle(q: &LabeledGraph, g: &LabeledGraph) -> OracleResult {
    let oversized = q.num_nodes() > ORACLE_MAX_QUERY || g.num_nodes() > ORACLE_MAX_TARGET;
    if oversized {
        log::warn!(
            "oracle on |V_q|={} |V_G|={} exceeds the recommended size",
            q.num_nodes(),
            g.num_nodes()
        );
    }
    let bucket = |l: Label| -> Vec<NodeId> { g.nodes().filter(|&v| g.label(v) == l).collect() };
    let buckets: Vec<Vec<NodeId>> = q.nodes().map(|u| bucket(q.label(u))).collect();
    let mut matches = Vec::new();
    let mut current = Vec::with_capacity(q.num_nodes());
    let mut taken = vec![false; g.num_nodes()];
    enumerate(q, g, &buckets, &mut current, &mut taken, &mut matches);
    matches.sort();
    OracleResult { matches, oversized }
}

fn enumerate(
    q: &LabeledGraph,
    g: &LabeledGraph,
    buckets: &[Vec<NodeId>],
    current: &mut Vec<NodeId>,
    taken: &mut [bool],
    out: &mut Vec<Vec<NodeId>>,
) {
    let u = current.len();
    if u == q.num_nodes() {
        if verify_match(q, g, current) {
            out.push(current.clone());
        }
        return;
    }
    for &v in &buckets[u] {
        if taken[v] {
            continue;
        }
        taken[v] = true;
        current.push(v);
        enumerate(q, g, buckets, current, taken, out);
        current.pop();
        taken[v] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> LabeledGraph {
        LabeledGraph::from_edges(vec![0; 3], &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn identity_verifies() {
        let t = triangle();
        assert!(verify_match(&t, &t, &[0, 1, 2]));
    }

    #[test]
    fn collapsing_nodes_fails() {
        let t = triangle();
        assert!(!verify_match(&t, &t, &[0, 0, 2]));
        assert!(!verify_match(&t, &t, &[0, 1]));
    }

    #[test]
    fn label_and_edge_checks() {
        let path = LabeledGraph::from_edges(vec![0, 1, 0], &[(0, 1), (1, 2)]).unwrap();
        let g = LabeledGraph::from_edges(vec![0, 1, 0, 0], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(verify_match(&path, &g, &[0, 1, 2]));
        assert!(!verify_match(&path, &g, &[0, 1, 3]));
        assert!(!verify_match(&path, &g, &[1, 0, 2]));
    }

    #[test]
    fn oracle_counts() {
        let t = triangle();
        assert_eq!(brute_force_oracle(&t, &t).count(), 6);
        let q = LabeledGraph::from_edges(vec![4], &[]).unwrap();
        assert_eq!(brute_force_oracle(&q, &t).count(), 0);
    }
}
