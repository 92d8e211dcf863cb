#![allow(dead_code)]

use submatch::graph::synth::preferential_attachment;
use submatch::graph::{random_walk_sample, LabeledGraph, NodeId};
use submatch::search::{
    backtracking_search, FilterMode, Policy, Prepared, RandomPolicy, SearchBudget, SearchProblem, StateView,
};

pub struct Pair {
    pub query: LabeledGraph,
    pub target: LabeledGraph,
    pub truth: Vec<NodeId>,
}

pub fn sampled_pair(target_nodes: usize, query_nodes: usize, seed: u64) -> Pair {
    let target = preferential_attachment(target_nodes, 2, 3, seed);
    let s = random_walk_sample(&target, query_nodes, 1.0, seed).expect("sample");
    Pair { query: s.query, target, truth: s.truth_mapping }
}

/// Wraps a policy and records the assignment seen at every call.
pub struct Recorder<P> {
    pub inner: P,
    pub states: Vec<(Vec<Option<NodeId>>, Vec<NodeId>)>,
}

impl<P: Policy> Policy for Recorder<P> {
    fn name(&self) -> &str {
        "recorder"
    }

    fn begin(&mut self, problem: &SearchProblem<'_>) {
        self.inner.begin(problem);
    }

    fn order(&mut self, state: &StateView<'_>, actions: &mut [NodeId]) {
        self.states.push((state.assignment.to_vec(), actions.to_vec()));
        self.inner.order(state, actions);
    }
}

/// Up to `limit` (assignment, actions) pairs visited by a seeded random search.
pub fn visited_states(pair: &Pair, prep: &Prepared, limit: usize, seed: u64) -> Vec<(Vec<Option<NodeId>>, Vec<NodeId>)> {
    let problem = prep.problem(&pair.query, &pair.target);
    let mut rec = Recorder { inner: RandomPolicy::new(seed), states: Vec::new() };
    backtracking_search(&problem, &mut rec, &SearchBudget::steps(20 * limit as u64), false);
    rec.states.truncate(limit);
    rec.states
}

pub fn prepared(pair: &Pair) -> Prepared {
    Prepared::new(&pair.query, &pair.target, FilterMode::LdfNlf).expect("connected query")
}
