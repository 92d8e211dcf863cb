use crate::graph::NodeId;
use crate::search::{local_candidates, SearchProblem, StateView};

/// The matched pairs `M`, the future candidate sets `M'`, their union `M̃`,
/// and its inverse for one search state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateContext {
    assignment: Vec<Option<NodeId>>,
    forward: Vec<Vec<NodeId>>,
    // (v, u) pairs sorted ascending
    reverse: Vec<(NodeId, NodeId)>,
    used_targets: Vec<NodeId>,
}

impl StateContext {
    /// `M'(u)` for every unmatched `u` is its local candidate set under
    /// `assignment`, computed exactly as the search does.
    pub fn build(problem: &SearchProblem<'_>, assignment: &[Option<NodeId>]) -> Self {
        let mut used = vec![false; problem.target.num_nodes()];
        for v in assignment.iter().flatten() {
            used[*v] = true;
        }
        Self::build_with_used(problem, assignment, &used)
    }

    pub fn from_view(view: &StateView<'_>) -> Self {
        Self::build_with_used(view.problem, view.assignment, view.used)
    }

    fn build_with_used(problem: &SearchProblem<'_>, assignment: &[Option<NodeId>], used: &[bool]) -> Self {
        let forward: Vec<Vec<NodeId>> = assignment
            .iter()
            .enumerate()
            .map(|(u, m)| match m {
                Some(v) => vec![*v],
                None => local_candidates(problem, assignment, used, u),
            })
            .collect();
        let mut reverse: Vec<(NodeId, NodeId)> = forward
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (v, u)))
            .collect();
        reverse.sort_unstable();
        let mut used_targets: Vec<NodeId> = assignment.iter().flatten().copied().collect();
        used_targets.sort_unstable();
        Self {
            assignment: assignment.to_vec(),
            forward,
            reverse,
            used_targets,
        }
    }

    pub fn num_query_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[Option<NodeId>] {
        &self.assignment
    }

    /// `M`: matched `(u, v)` pairs in query-id order.
    pub fn matched(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.assignment.iter().enumerate().filter_map(|(u, m)| m.map(|v| (u, v)))
    }

    /// `M'(u)`, or `None` when `u` is matched.
    pub fn future(&self, u: NodeId) -> Option<&[NodeId]> {
        self.assignment[u].is_none().then(|| self.forward[u].as_slice())
    }

    /// `M̃(u)`, ascending.
    pub fn forward(&self, u: NodeId) -> &[NodeId] {
        &self.forward[u]
    }

    /// `M̃⁻¹(v)`, ascending.
    pub fn reverse(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let lo = self.reverse.partition_point(|&(x, _)| x < v);
        let hi = self.reverse.partition_point(|&(x, _)| x <= v);
        self.reverse[lo..hi].iter().map(|&(_, u)| u)
    }

    /// `Σ_u |M̃(u)|`.
    pub fn num_links(&self) -> usize {
        self.reverse.len()
    }

    pub fn query_selected(&self, u: NodeId) -> bool {
        self.assignment[u].is_some()
    }

    pub fn target_selected(&self, v: NodeId) -> bool {
        self.used_targets.binary_search(&v).is_ok()
    }

    /// True when `v ∈ M̃(u)`.
    pub fn links(&self, u: NodeId, v: NodeId) -> bool {
        self.forward[u].binary_search(&v).is_ok()
    }
}
