//! Undirected node-labeled graphs and everything that reads, writes, encodes
//! or samples them.

mod encoding;
mod format;
mod iso;
mod sampling;
pub mod synth;

pub use encoding::{initial_encoding, ldp_features, EncodingVariant, NodeEncoding, ENCODING_DIM};
pub use format::{parse_graph, parse_mapping, serialize_graph, serialize_mapping, ParseError};
pub use iso::isomorphic_check;
pub use sampling::{p_schedule, random_walk_sample, SampleError, SampledQuery};

use std::fmt;

pub type NodeId = usize;
pub type Label = u32;

/// Errors raised when a graph is assembled from raw parts.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(NodeId, NodeId, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
}

/// Immutable undirected labeled graph with sorted adjacency lists.
#[derive(Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    labels: Vec<Label>,
    adjacency: Vec<Vec<NodeId>>,
    num_edges: usize,
}

impl LabeledGraph {
    /// Builds a graph from node labels and an undirected edge list.
    ///
    /// Every edge must appear once (in either orientation); self-loops and
    /// repeated edges are rejected.
    pub fn from_edges(labels: Vec<Label>, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge(u.min(w[0]), u.max(w[0])));
            }
        }
        Ok(Self {
            labels,
            adjacency,
            num_edges: edges.len(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn label(&self, u: NodeId) -> Label {
        self.labels[u]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adjacency[u].len()
    }

    /// Sorted neighbor list of `u`.
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adjacency[u]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        let (a, b) = if self.degree(u) <= self.degree(v) { (u, v) } else { (v, u) };
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Each undirected edge once as `(src, dst)` with `src < dst`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        0..self.num_nodes()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &w in self.neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    /// Largest BFS distance from `u` within its component.
    pub fn eccentricity(&self, u: NodeId) -> usize {
        let mut dist = vec![usize::MAX; self.num_nodes()];
        let mut queue = std::collections::VecDeque::from([u]);
        dist[u] = 0;
        let mut far = 0;
        while let Some(x) = queue.pop_front() {
            far = far.max(dist[x]);
            for &w in self.neighbors(x) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[x] + 1;
                    queue.push_back(w);
                }
            }
        }
        far
    }

    /// Distinct labels in ascending order.
    pub fn label_alphabet(&self) -> Vec<Label> {
        let mut labels = self.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

impl fmt::Debug for LabeledGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabeledGraph")
            .field("num_nodes", &self.num_nodes())
            .field("num_edges", &self.num_edges)
            .field("labels", &self.labels)
            .field("edges", &self.edges().collect::<Vec<_>>())
            .finish()
    }
}
