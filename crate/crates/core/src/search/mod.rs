//! Filtering, ordering, and policy-driven backtracking for exact subgraph
//! matching under non-induced semantics.

mod candidates;
mod engine;
mod order;
mod policy;
mod verify;

pub use candidates::{ldf_filter, nlf_filter, CandidateSets};
pub use engine::{
    backtracking_search, local_candidates, promise_restart_score, FirstSolution, PromiseMode,
    RestartConfig, SearchBudget, SearchOutcome, SearchProblem, SearchState, SearchTree, StateId,
    StateView, StopReason,
};
pub use order::{order_query_nodes, QueryOrder};
pub use policy::{DegreePolicy, IdentityPolicy, Policy, RandomPolicy, TruthPolicy};
pub use verify::{brute_force_oracle, verify_match, OracleResult, ORACLE_MAX_QUERY, ORACLE_MAX_TARGET};

use std::fmt::Write as _;

use crate::graph::{LabeledGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SearchError {
    #[error("query graph has no nodes")]
    EmptyQuery,
    #[error("query graph is disconnected")]
    DisconnectedQuery,
    #[error("invalid query order: {0}")]
    BadOrder(String),
}

/// Which global filters run before the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    Ldf,
    LdfNlf,
}

/// Filter and order for a query/target pair.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub candidates: CandidateSets,
    pub order: QueryOrder,
}

impl Prepared {
    pub fn new(q: &LabeledGraph, g: &LabeledGraph, filter: FilterMode) -> Result<Self, SearchError> {
        let ldf = ldf_filter(q, g);
        let candidates = match filter {
            FilterMode::Ldf => ldf,
            FilterMode::LdfNlf => nlf_filter(q, g, &ldf),
        };
        let order = order_query_nodes(q, &candidates)?;
        Ok(Self { candidates, order })
    }

    pub fn problem<'a>(&'a self, q: &'a LabeledGraph, g: &'a LabeledGraph) -> SearchProblem<'a> {
        SearchProblem {
            query: q,
            target: g,
            candidates: &self.candidates,
            order: &self.order,
        }
    }
}

/// Filter → order → search in one call.
pub fn solve(
    q: &LabeledGraph,
    g: &LabeledGraph,
    filter: FilterMode,
    policy: &mut dyn Policy,
    budget: &SearchBudget,
) -> Result<SearchOutcome, SearchError> {
    let prepared = Prepared::new(q, g, filter)?;
    Ok(backtracking_search(&prepared.problem(q, g), policy, budget, false))
}

/// `M <q0:t0> <q1:t1> ...` in query-id order.
pub fn format_match(m: &[NodeId]) -> String {
    let mut line = String::from("M");
    for (u, v) in m.iter().enumerate() {
        let _ = write!(line, " {u}:{v}");
    }
    line
}

/// `S <steps> <first_ms> <num_matches>`; `first_ms` is `-1` when unsolved.
pub fn format_stats(outcome: &SearchOutcome) -> String {
    let first = outcome
        .first_solution
        .map(|f| format!("{:.3}", f.elapsed_ms))
        .unwrap_or_else(|| "-1".into());
    format!("S {} {} {}", outcome.steps, first, outcome.matches.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn match_line_format() {
        assert_eq!(format_match(&[3, 0, 7]), "M 0:3 1:0 2:7");
    }
}
