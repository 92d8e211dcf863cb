//! Action-ordering policies plugged into the backtracking engine.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::NodeId;

use super::{SearchProblem, StateView};

/// Orders the local candidates of the current state. Implementations may
/// only permute `actions`, never add or drop entries.
pub trait Policy {
    fn name(&self) -> &str;

    /// Called once before a search run starts.
    fn begin(&mut self, _problem: &SearchProblem<'_>) {}

    fn order(&mut self, state: &StateView<'_>, actions: &mut [NodeId]);
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn begin(&mut self, problem: &SearchProblem<'_>) {
        (**self).begin(problem)
    }

    fn order(&mut self, state: &StateView<'_>, actions: &mut [NodeId]) {
        (**self).order(state, actions)
    }
}

/// Leaves candidates in ascending id order.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPolicy;

impl Policy for IdentityPolicy {
    fn name(&self) -> &str {
        "identity"
    }

    fn order(&mut self, _state: &StateView<'_>, _actions: &mut [NodeId]) {}
}

/// Seeded uniform shuffle, the ordering classical solvers effectively use.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn begin(&mut self, _problem: &SearchProblem<'_>) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    fn order(&mut self, _state: &StateView<'_>, actions: &mut [NodeId]) {
        actions.shuffle(&mut self.rng);
    }
}

/// Highest target degree first, ties by ascending id.
#[derive(Debug, Clone, Copy, Default)]
pub struct DegreePolicy;

impl Policy for DegreePolicy {
    fn name(&self) -> &str {
        "degree"
    }

    fn order(&mut self, state: &StateView<'_>, actions: &mut [NodeId]) {
        let g = state.problem.target;
        actions.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));
    }
}

/// Puts a known mapping's target first; a perfect policy for that match.
#[derive(Debug, Clone)]
pub struct TruthPolicy {
    mapping: Vec<NodeId>,
}

impl TruthPolicy {
    pub fn new(mapping: Vec<NodeId>) -> Self {
        Self { mapping }
    }
}

impl Policy for TruthPolicy {
    fn name(&self) -> &str {
        "truth"
    }

    fn order(&mut self, state: &StateView<'_>, actions: &mut [NodeId]) {
        let Some(u) = state.current() else { return };
        let want = self.mapping[u];
        if let Some(pos) = actions.iter().position(|&v| v == want) {
            actions[..=pos].rotate_right(1);
        }
    }
}
