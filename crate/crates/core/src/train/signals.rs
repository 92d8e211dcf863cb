use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{LabeledGraph, NodeId};
use crate::search::{
    backtracking_search, local_candidates, FilterMode, Prepared, SearchBudget, SearchError, SearchProblem,
    SearchTree, TruthPolicy,
};

/// A query/target pair with its filter and order, shared by every sample
/// harvested from one search.
#[derive(Debug)]
pub struct Episode {
    pub query: LabeledGraph,
    pub target: Arc<LabeledGraph>,
    pub prepared: Prepared,
}

impl Episode {
    pub fn new(query: LabeledGraph, target: Arc<LabeledGraph>, filter: FilterMode) -> Result<Self, SearchError> {
        let prepared = Prepared::new(&query, &target, filter)?;
        Ok(Self { query, target, prepared })
    }

    pub fn problem(&self) -> SearchProblem<'_> {
        self.prepared.problem(&self.query, &self.target)
    }
}

/// A positive pair chosen `k` steps after the sample's state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Positive {
    pub k: usize,
    pub u: NodeId,
    pub v: NodeId,
}

/// One search state with its look-ahead positives and sampled negatives.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub episode: Arc<Episode>,
    pub assignment: Vec<Option<NodeId>>,
    /// `|M|` at this state; the query node being matched is `φ[depth]`.
    pub depth: usize,
    pub u: NodeId,
    /// Sorted by `(k, u, v)`, no duplicates.
    pub positives: Vec<Positive>,
    pub negatives: Vec<(NodeId, NodeId)>,
}

impl TrainingSample {
    /// `A_{u_t}` at this state.
    pub fn actions(&self) -> Vec<NodeId> {
        let problem = self.episode.problem();
        let mut used = vec![false; problem.target.num_nodes()];
        for v in self.assignment.iter().flatten() {
            used[*v] = true;
        }
        local_candidates(&problem, &self.assignment, &used, self.u)
    }

    pub fn num_pairs(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }
}

/// One sample per state on a solution path, negatives still empty.
///
/// A state's positives are the pairs chosen at it and at every descendant
/// that leads to a full match, tagged with their distance `k`.
pub fn collect_training_signals(episode: &Arc<Episode>, tree: &SearchTree) -> Vec<TrainingSample> {
    let root = SearchTree::ROOT;
    if tree.states.is_empty() || tree.get(root).solutions == 0 {
        return Vec::new();
    }
    let order = episode.prepared.order.as_slice();
    let nq = order.len();
    let kids = tree.children();
    let mut out = Vec::new();

    for (id, s) in tree.states.iter().enumerate() {
        if s.solutions == 0 || s.depth >= nq {
            continue;
        }
        let mut positives = BTreeSet::new();
        let mut stack: Vec<usize> = kids[id].clone();
        while let Some(c) = stack.pop() {
            let child = tree.get(c);
            if child.solutions == 0 {
                continue;
            }
            let v = child.action.expect("non-root state has an action");
            positives.insert(Positive { k: child.depth - 1 - s.depth, u: order[child.depth - 1], v });
            stack.extend_from_slice(&kids[c]);
        }
        let mut assignment = vec![None; nq];
        for (d, v) in tree.path_targets(id).into_iter().enumerate() {
            assignment[order[d]] = Some(v);
        }
        out.push(TrainingSample {
            episode: Arc::clone(episode),
            assignment,
            depth: s.depth,
            u: order[s.depth],
            positives: positives.into_iter().collect(),
            negatives: Vec::new(),
        });
    }
    out
}

/// The single-path tree obtained by replaying `truth` under the episode's order.
pub fn truth_path_tree(episode: &Episode, truth: &[NodeId]) -> SearchTree {
    let budget = SearchBudget::steps(truth.len() as u64).with_solution_cap(1);
    let mut policy = TruthPolicy::new(truth.to_vec());
    backtracking_search(&episode.problem(), &mut policy, &budget, true)
        .tree
        .unwrap_or_default()
}

/// `|P|` negatives for `sample`, uniform without replacement from
/// `A_{u_t}` minus the `k = 0` positives.
///
/// If that pool is empty, pairs are drawn with replacement from the
/// non-positive local candidates of the sample's later query nodes. Returns
/// fewer than `|P|` pairs only when both pools are empty.
pub fn sample_negatives(sample: &TrainingSample, actions: &[NodeId], seed: u64) -> Vec<(NodeId, NodeId)> {
    let want = sample.positives.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let is_positive = |u: NodeId, v: NodeId| sample.positives.iter().any(|p| p.u == u && p.v == v);

    let pool: Vec<NodeId> = actions.iter().copied().filter(|&v| !is_positive(sample.u, v)).collect();
    if !pool.is_empty() {
        let n = want.min(pool.len());
        let mut picked: Vec<(NodeId, NodeId)> = index::sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|i| (sample.u, pool[i]))
            .collect();
        while picked.len() < want {
            picked.push((sample.u, pool[rng.gen_range(0..pool.len())]));
        }
        return picked;
    }

    let problem = sample.episode.problem();
    let mut used = vec![false; problem.target.num_nodes()];
    for v in sample.assignment.iter().flatten() {
        used[*v] = true;
    }
    let later: BTreeSet<NodeId> = sample.positives.iter().filter(|p| p.k > 0).map(|p| p.u).collect();
    let mut fallback = Vec::new();
    for u in later {
        for v in local_candidates(&problem, &sample.assignment, &used, u) {
            if !is_positive(u, v) {
                fallback.push((u, v));
            }
        }
    }
    if fallback.is_empty() {
        return Vec::new();
    }
    (0..want).map(|_| fallback[rng.gen_range(0..fallback.len())]).collect()
}
