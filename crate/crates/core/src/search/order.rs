use crate::graph::{LabeledGraph, NodeId};

use super::{CandidateSets, SearchError};

/// Matching order `φ` over the query nodes. Every node after the first has
/// an already-ordered neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOrder {
    order: Vec<NodeId>,
}

impl QueryOrder {
    pub fn as_slice(&self) -> &[NodeId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn at(&self, depth: usize) -> NodeId {
        self.order[depth]
    }

    /// Builds an order for a possibly disconnected graph, restarting from a
    /// fresh component when the frontier empties. Only used internally where
    /// connectivity of the plan is not needed.
    pub(crate) fn covering(q: &LabeledGraph, c: &CandidateSets) -> Self {
        Self {
            order: greedy(q, c, true).expect("covering order always completes"),
        }
    }

    /// Wraps an explicit permutation after checking the connectivity invariant.
    pub fn from_permutation(q: &LabeledGraph, order: Vec<NodeId>) -> Result<Self, SearchError> {
        let mut seen = vec![false; q.num_nodes()];
        if order.len() != q.num_nodes() {
            return Err(SearchError::BadOrder("order must list every query node once".into()));
        }
        for (i, &u) in order.iter().enumerate() {
            if u >= q.num_nodes() || seen[u] {
                return Err(SearchError::BadOrder(format!("node {u} repeated or out of range")));
            }
            if i > 0 && !q.neighbors(u).iter().any(|&w| seen[w]) {
                return Err(SearchError::BadOrder(format!("node {u} has no earlier neighbor")));
            }
            seen[u] = true;
        }
        Ok(Self { order })
    }
}

/// Preference key: fewest candidates, then higher degree, then lower id.
fn key(q: &LabeledGraph, c: &CandidateSets, u: NodeId) -> (usize, std::cmp::Reverse<usize>, NodeId) {
    (c.len(u), std::cmp::Reverse(q.degree(u)), u)
}

fn greedy(q: &LabeledGraph, c: &CandidateSets, allow_jumps: bool) -> Option<Vec<NodeId>> {
    let n = q.num_nodes();
    let mut placed = vec![false; n];
    let mut frontier = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let pick = (0..n)
            .filter(|&u| !placed[u] && (frontier[u] || order.is_empty()))
            .min_by_key(|&u| key(q, c, u))
            .or_else(|| {
                allow_jumps
                    .then(|| (0..n).filter(|&u| !placed[u]).min_by_key(|&u| key(q, c, u)))
                    .flatten()
            })?;
        placed[pick] = true;
        order.push(pick);
        for &w in q.neighbors(pick) {
            frontier[w] = true;
        }
    }
    Some(order)
}

/// Greedy least-candidates-first order restricted to the growing frontier.
pub fn order_query_nodes(q: &LabeledGraph, c: &CandidateSets) -> Result<QueryOrder, SearchError> {
    if q.num_nodes() == 0 {
        return Err(SearchError::EmptyQuery);
    }
    greedy(q, c, false)
        .map(|order| QueryOrder { order })
        .ok_or(SearchError::DisconnectedQuery)
}
