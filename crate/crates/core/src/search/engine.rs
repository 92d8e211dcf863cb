//! Backtracking search over an explicit state tree.
//!
//! Every state keeps its policy-ordered action list and an explored-action
//! cursor, so the search can leave a subtree and come back to it later. On a
//! dead end the engine normally returns to the parent; with promise-based
//! restarts enabled it periodically jumps to the most promising live state in
//! the tree instead. Since no (state, action) pair is expanded twice and no
//! live state is ever dropped, an unbounded run enumerates every match no
//! matter which policy or restart setting is used.

use std::time::{Duration, Instant};

use crate::graph::{LabeledGraph, NodeId};

use super::{CandidateSets, Policy, QueryOrder};

/// Everything that stays fixed during one search run.
#[derive(Debug, Clone, Copy)]
pub struct SearchProblem<'a> {
    pub query: &'a LabeledGraph,
    pub target: &'a LabeledGraph,
    pub candidates: &'a CandidateSets,
    pub order: &'a QueryOrder,
}

/// Which end of the promise score a restart picks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PromiseMode {
    #[default]
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartConfig {
    pub enabled: bool,
    /// Dead ends that must accumulate between two restarts.
    pub threshold: u64,
    /// Maximum number of restarts in one search.
    pub budget: u64,
    pub mode: PromiseMode,
}

impl Default for RestartConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 10,
            budget: 120,
            mode: PromiseMode::Maximize,
        }
    }
}

impl RestartConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

/// Limits for one run. `None` means unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SearchBudget {
    pub time_limit: Option<Duration>,
    /// Maximum number of recursive calls (mapping extensions).
    pub step_limit: Option<u64>,
    pub solution_cap: Option<u64>,
    pub restart: RestartConfig,
}

impl SearchBudget {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn steps(limit: u64) -> Self {
        Self {
            step_limit: Some(limit),
            ..Self::default()
        }
    }

    pub fn with_restart(mut self, restart: RestartConfig) -> Self {
        self.restart = restart;
        self
    }

    pub fn with_solution_cap(mut self, cap: u64) -> Self {
        self.solution_cap = Some(cap);
        self
    }
}

pub type StateId = usize;

/// One node of the search tree: the state reached after extending the
/// parent's mapping with `action`.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub parent: Option<StateId>,
    /// `|M|` at this state.
    pub depth: usize,
    /// Target node assigned to `φ[depth - 1]` when entering this state.
    pub action: Option<NodeId>,
    actions: Vec<NodeId>,
    pub num_actions: usize,
    pub explored: usize,
    /// Full matches found in this state's subtree.
    pub solutions: u64,
    live_children: u32,
    dead: bool,
    vacant: bool,
}

impl SearchState {
    fn new(parent: Option<StateId>, depth: usize, action: Option<NodeId>) -> Self {
        Self {
            parent,
            depth,
            action,
            actions: Vec::new(),
            num_actions: 0,
            explored: 0,
            solutions: 0,
            live_children: 0,
            dead: false,
            vacant: false,
        }
    }

    pub fn is_live(&self) -> bool {
        !self.vacant && self.explored < self.num_actions
    }

    /// Remaining ordered actions (empty once the state is exhausted).
    pub fn pending_actions(&self) -> &[NodeId] {
        self.actions.get(self.explored..).unwrap_or(&[])
    }
}

/// Promise of resuming at `state`: a 2:1 weighted average of normalized depth
/// and the unexplored fraction of its actions.
pub fn promise_restart_score(state: &SearchState, query_size: usize) -> f64 {
    let depth = state.depth as f64 / query_size as f64;
    let unexplored = if state.num_actions == 0 {
        0.0
    } else {
        1.0 - state.explored as f64 / state.num_actions as f64
    };
    (2.0 * depth + unexplored) / 3.0
}

/// The retained search tree, used to harvest training signals.
#[derive(Debug, Clone, Default)]
pub struct SearchTree {
    pub states: Vec<SearchState>,
}

impl SearchTree {
    pub const ROOT: StateId = 0;

    pub fn get(&self, id: StateId) -> &SearchState {
        &self.states[id]
    }

    /// Targets assigned along the path root → `id`, in `φ` order.
    pub fn path_targets(&self, id: StateId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.states[id].depth);
        let mut cur = Some(id);
        while let Some(s) = cur {
            if let Some(v) = self.states[s].action {
                out.push(v);
            }
            cur = self.states[s].parent;
        }
        out.reverse();
        out
    }

    pub fn children(&self) -> Vec<Vec<StateId>> {
        let mut kids = vec![Vec::new(); self.states.len()];
        for (id, s) in self.states.iter().enumerate() {
            if let Some(p) = s.parent {
                kids[p].push(id);
            }
        }
        kids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Exhausted,
    StepLimit,
    TimeLimit,
    SolutionCap,
    /// Some query node had no candidate; nothing was searched.
    EmptyCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstSolution {
    pub elapsed_ms: f64,
    /// Recursive-call count at which the first match completed.
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Each match as `m[u] = v` indexed by query node id.
    pub matches: Vec<Vec<NodeId>>,
    pub first_solution: Option<FirstSolution>,
    pub steps: u64,
    /// Largest `|M|` reached.
    pub max_depth: usize,
    pub dead_ends: u64,
    pub restarts: u64,
    pub stop: StopReason,
    pub tree: Option<SearchTree>,
}

impl SearchOutcome {
    pub fn solved(&self) -> bool {
        !self.matches.is_empty()
    }
}

/// Read-only view of the current partial mapping handed to policies.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    pub problem: &'a SearchProblem<'a>,
    /// `assignment[u] = Some(v)` for matched query nodes.
    pub assignment: &'a [Option<NodeId>],
    /// `used[v]` is true when target node `v` is already in the mapping.
    pub used: &'a [bool],
    pub depth: usize,
}

impl StateView<'_> {
    /// Query node to be matched next, `φ[depth]`.
    pub fn current(&self) -> Option<NodeId> {
        (self.depth < self.problem.order.len()).then(|| self.problem.order.at(self.depth))
    }
}

/// Local candidates `A_u`: targets in `C(u)` that are still unused and adjacent
/// to the image of every already-matched neighbor of `u`. Returned ascending.
pub fn local_candidates(
    problem: &SearchProblem<'_>,
    assignment: &[Option<NodeId>],
    used: &[bool],
    u: NodeId,
) -> Vec<NodeId> {
    let q = problem.query;
    let g = problem.target;
    let c = problem.candidates;
    let anchors: Vec<NodeId> = q
        .neighbors(u)
        .iter()
        .filter_map(|&w| assignment[w])
        .collect();
    let (pool, from_cands): (&[NodeId], bool) =
        match anchors.iter().min_by_key(|&&a| g.degree(a)) {
            Some(&a) if g.degree(a) < c.len(u) => (g.neighbors(a), false),
            _ => (c.get(u), true),
        };
    pool.iter()
        .copied()
        .filter(|&v| {
            !used[v]
                && (from_cands || c.contains(u, v))
                && anchors.iter().all(|&a| g.has_edge(v, a))
        })
        .collect()
}

struct Engine<'p, 'a> {
    problem: &'p SearchProblem<'a>,
    states: Vec<SearchState>,
    free: Vec<StateId>,
    retain: bool,
    assignment: Vec<Option<NodeId>>,
    used: Vec<bool>,
}

impl Engine<'_, '_> {
    fn alloc(&mut self, state: SearchState) -> StateId {
        if let Some(p) = state.parent {
            self.states[p].live_children += 1;
        }
        match self.free.pop() {
            Some(id) => {
                self.states[id] = state;
                id
            }
            None => {
                self.states.push(state);
                self.states.len() - 1
            }
        }
    }

    /// Recycles `id` and any ancestors it was keeping alive.
    fn release(&mut self, mut id: StateId) {
        if self.retain {
            return;
        }
        loop {
            let s = &self.states[id];
            if s.vacant || s.is_live() || s.live_children > 0 || s.parent.is_none() {
                return;
            }
            let parent = s.parent.expect("checked above");
            self.states[id].vacant = true;
            self.free.push(id);
            self.states[parent].live_children -= 1;
            id = parent;
        }
    }

    fn current_query_node(&self, depth: usize) -> NodeId {
        self.problem.order.at(depth)
    }

    fn expand(&mut self, id: StateId, policy: &mut dyn Policy) {
        let depth = self.states[id].depth;
        let u = self.current_query_node(depth);
        let mut actions = local_candidates(self.problem, &self.assignment, &self.used, u);
        if actions.len() > 1 {
            let view = StateView {
                problem: self.problem,
                assignment: &self.assignment,
                used: &self.used,
                depth,
            };
            policy.order(&view, &mut actions);
        }
        let s = &mut self.states[id];
        s.num_actions = actions.len();
        s.actions = actions;
    }

    fn assign(&mut self, depth: usize, v: NodeId) {
        let u = self.current_query_node(depth);
        self.assignment[u] = Some(v);
        self.used[v] = true;
    }

    fn unassign(&mut self, depth: usize, v: NodeId) {
        let u = self.current_query_node(depth);
        self.assignment[u] = None;
        self.used[v] = false;
    }

    /// Replaces the current mapping with the one on the path to `id`.
    fn jump_to(&mut self, id: StateId) {
        for u in 0..self.assignment.len() {
            if let Some(v) = self.assignment[u].take() {
                self.used[v] = false;
            }
        }
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(s) = cur {
            if let Some(v) = self.states[s].action {
                path.push(v);
            }
            cur = self.states[s].parent;
        }
        for (depth, v) in path.into_iter().rev().enumerate() {
            self.assign(depth, v);
        }
    }

    fn best_live(&self, mode: PromiseMode) -> Option<StateId> {
        let nq = self.problem.query.num_nodes();
        let mut best: Option<(f64, usize, StateId)> = None;
        for (id, s) in self.states.iter().enumerate() {
            if !s.is_live() {
                continue;
            }
            let score = promise_restart_score(s, nq);
            let score = match mode {
                PromiseMode::Maximize => score,
                PromiseMode::Minimize => -score,
            };
            // Ties: deepest, then most recently created (largest id).
            let better = match best {
                None => true,
                Some((bs, bd, bid)) => {
                    score > bs || (score == bs && (s.depth > bd || (s.depth == bd && id > bid)))
                }
            };
            if better {
                best = Some((score, s.depth, id));
            }
        }
        best.map(|(_, _, id)| id)
    }

    fn check_partial(&self, u: NodeId) -> bool {
        let q = self.problem.query;
        let Some(v) = self.assignment[u] else { return false };
        q.neighbors(u).iter().all(|&w| match self.assignment[w] {
            Some(x) => self.problem.target.has_edge(v, x),
            None => true,
        })
    }
}

/// Runs the backtracking search, ordering actions with `policy`.
///
/// With `retain_tree` the full state tree is returned in the outcome for
/// training-signal collection; otherwise finished states are recycled.
pub fn backtracking_search(
    problem: &SearchProblem<'_>,
    policy: &mut dyn Policy,
    budget: &SearchBudget,
    retain_tree: bool,
) -> SearchOutcome {
    let start = Instant::now();
    let nq = problem.query.num_nodes();
    let mut outcome = SearchOutcome {
        matches: Vec::new(),
        first_solution: None,
        steps: 0,
        max_depth: 0,
        dead_ends: 0,
        restarts: 0,
        stop: StopReason::Exhausted,
        tree: None,
    };
    if nq == 0 || problem.candidates.any_empty() {
        outcome.stop = StopReason::EmptyCandidates;
        outcome.tree = retain_tree.then(SearchTree::default);
        return outcome;
    }

    policy.begin(problem);
    let mut engine = Engine {
        problem,
        states: Vec::new(),
        free: Vec::new(),
        retain: retain_tree,
        assignment: vec![None; nq],
        used: vec![false; problem.target.num_nodes()],
    };
    let root = engine.alloc(SearchState::new(None, 0, None));
    engine.expand(root, policy);

    let restart = budget.restart;
    let mut since_restart = 0u64;
    let mut cur = root;

    loop {
        if let Some(limit) = budget.time_limit {
            if start.elapsed() >= limit {
                outcome.stop = StopReason::TimeLimit;
                break;
            }
        }
        let state = &engine.states[cur];
        if state.is_live() {
            if budget.step_limit.is_some_and(|l| outcome.steps >= l) {
                outcome.stop = StopReason::StepLimit;
                break;
            }
            let depth = state.depth;
            let v = state.actions[state.explored];
            engine.states[cur].explored += 1;
            engine.assign(depth, v);
            debug_assert!(engine.check_partial(engine.current_query_node(depth)));
            outcome.steps += 1;
            outcome.max_depth = outcome.max_depth.max(depth + 1);
            let child = engine.alloc(SearchState::new(Some(cur), depth + 1, Some(v)));

            if depth + 1 == nq {
                let found: Vec<NodeId> = engine
                    .assignment
                    .iter()
                    .map(|a| a.expect("complete mapping"))
                    .collect();
                outcome.matches.push(found);
                if outcome.first_solution.is_none() {
                    outcome.first_solution = Some(FirstSolution {
                        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                        step: outcome.steps,
                    });
                }
                let mut up = Some(child);
                while let Some(s) = up {
                    engine.states[s].solutions += 1;
                    up = engine.states[s].parent;
                }
                engine.unassign(depth, v);
                engine.release(child);
                if budget
                    .solution_cap
                    .is_some_and(|cap| outcome.matches.len() as u64 >= cap)
                {
                    outcome.stop = StopReason::SolutionCap;
                    break;
                }
            } else {
                engine.expand(child, policy);
                cur = child;
            }
            continue;
        }

        // Dead end: no actions at all, or every action explored.
        let first_visit = !engine.states[cur].dead;
        if first_visit {
            let s = &mut engine.states[cur];
            s.dead = true;
            s.actions = Vec::new();
            outcome.dead_ends += 1;
            since_restart += 1;
        }
        let parent = engine.states[cur].parent;
        let restart_now = first_visit
            && restart.enabled
            && since_restart >= restart.threshold
            && outcome.restarts < restart.budget;

        let next = if restart_now {
            engine.best_live(restart.mode).map(|id| (id, true))
        } else {
            match parent {
                Some(p) => Some((p, false)),
                None => engine.best_live(restart.mode).map(|id| (id, true)),
            }
        };
        let leaving = cur;
        match next {
            None => {
                outcome.stop = StopReason::Exhausted;
                break;
            }
            Some((target, jumped)) => {
                if jumped {
                    if restart_now {
                        outcome.restarts += 1;
                        since_restart = 0;
                    }
                    engine.jump_to(target);
                } else if let Some(v) = engine.states[cur].action {
                    engine.unassign(engine.states[cur].depth - 1, v);
                }
                cur = target;
            }
        }
        engine.release(leaving);
    }

    if retain_tree {
        outcome.tree = Some(SearchTree { states: engine.states });
    }
    outcome
}
