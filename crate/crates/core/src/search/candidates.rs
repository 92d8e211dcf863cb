use std::collections::HashMap;

use crate::graph::{Label, LabeledGraph, NodeId};

/// Global candidate map `C`: for each query node, the sorted target nodes it
/// may map to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSets {
    sets: Vec<Vec<NodeId>>,
}

impl CandidateSets {
    pub fn new(sets: Vec<Vec<NodeId>>) -> Self {
        let mut sets = sets;
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        Self { sets }
    }

    pub fn get(&self, u: NodeId) -> &[NodeId] {
        &self.sets[u]
    }

    pub fn len(&self, u: NodeId) -> usize {
        self.sets[u].len()
    }

    pub fn contains(&self, u: NodeId, v: NodeId) -> bool {
        self.sets[u].binary_search(&v).is_ok()
    }

    pub fn num_query_nodes(&self) -> usize {
        self.sets.len()
    }

    /// True when some query node has no candidate at all.
    pub fn any_empty(&self) -> bool {
        self.sets.iter().any(Vec::is_empty)
    }

    pub fn total(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

/// Label-and-degree filter: `C(u) = { v : L(v) = L(u), deg(v) >= deg(u) }`.
pub fn ldf_filter(q: &LabeledGraph, g: &LabeledGraph) -> CandidateSets {
    let mut by_label: HashMap<Label, Vec<NodeId>> = HashMap::new();
    for v in g.nodes() {
        by_label.entry(g.label(v)).or_default().push(v);
    }
    let sets = q
        .nodes()
        .map(|u| {
            by_label
                .get(&q.label(u))
                .map(|bucket| {
                    bucket
                        .iter()
                        .copied()
                        .filter(|&v| g.degree(v) >= q.degree(u))
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();
    CandidateSets { sets }
}

fn neighbor_label_counts(g: &LabeledGraph, u: NodeId) -> HashMap<Label, usize> {
    let mut counts = HashMap::new();
    for &w in g.neighbors(u) {
        *counts.entry(g.label(w)).or_insert(0) += 1;
    }
    counts
}

/// Neighbor-label-frequency filter: keeps `v ∈ base(u)` only if, for every
/// label, `v` has at least as many neighbors carrying it as `u` does.
pub fn nlf_filter(q: &LabeledGraph, g: &LabeledGraph, base: &CandidateSets) -> CandidateSets {
    let mut target_counts: HashMap<NodeId, HashMap<Label, usize>> = HashMap::new();
    let sets = q
        .nodes()
        .map(|u| {
            let need = neighbor_label_counts(q, u);
            base.get(u)
                .iter()
                .copied()
                .filter(|&v| {
                    let have = target_counts
                        .entry(v)
                        .or_insert_with(|| neighbor_label_counts(g, v));
                    need.iter().all(|(l, &c)| have.get(l).copied().unwrap_or(0) >= c)
                })
                .collect()
        })
        .collect();
    CandidateSets { sets }
}
