use crate::graph::NodeId;
use crate::search::{Policy, SearchProblem, StateView};

use super::{policy_distribution, EmbeddingCache, ModelError, PolicyModel, StateContext};

/// Orders actions by descending model probability, ties by ascending id.
///
/// On a model error the actions are left in their incoming order and the
/// error is counted.
#[derive(Debug)]
pub struct NeuralPolicy<'m> {
    model: &'m PolicyModel,
    cache: EmbeddingCache,
    errors: usize,
    calls: usize,
}

impl<'m> NeuralPolicy<'m> {
    pub fn new(model: &'m PolicyModel) -> Self {
        Self {
            model,
            cache: EmbeddingCache::new(),
            errors: 0,
            calls: 0,
        }
    }

    pub fn errors(&self) -> usize {
        self.errors
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    /// Action probabilities at `state`, aligned with `actions`.
    pub fn probabilities(&self, state: &StateView<'_>, actions: &[NodeId]) -> Result<Vec<f64>, ModelError> {
        let u = state.current().ok_or(ModelError::EmptyActions)?;
        let ctx = StateContext::from_view(state);
        let emb = self.model.encode(&self.cache, state.problem, &ctx, actions)?;
        let hs = self.model.state_embedding(&emb.query)?;
        let logits = self.model.policy_logits(&emb, &hs, u, actions)?;
        Ok(policy_distribution(&logits))
    }
}

/// Indices of `actions` sorted by descending probability, ties by ascending id.
pub(crate) fn rank_by_probability(actions: &[NodeId], probs: &[f64]) -> Vec<NodeId> {
    let mut idx: Vec<usize> = (0..actions.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(actions[a].cmp(&actions[b])));
    idx.into_iter().map(|i| actions[i]).collect()
}

impl Policy for NeuralPolicy<'_> {
    fn name(&self) -> &str {
        "neural"
    }

    fn begin(&mut self, problem: &SearchProblem<'_>) {
        if let Err(e) = self.cache.ensure(self.model, problem) {
            log::warn!("neural policy could not build its cache: {e}");
            self.errors += 1;
        }
    }

    fn order(&mut self, state: &StateView<'_>, actions: &mut [NodeId]) {
        self.calls += 1;
        match self.probabilities(state, actions) {
            Ok(p) => {
                let ranked = rank_by_probability(actions, &p);
                actions.copy_from_slice(&ranked);
            }
            Err(e) => {
                if self.errors == 0 {
                    log::warn!("neural policy fell back to the incoming order: {e}");
                }
                self.errors += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_by_probability() {
        assert_eq!(rank_by_probability(&[0, 1, 2], &[0.1, 0.7, 0.2]), vec![1, 2, 0]);
        assert_eq!(rank_by_probability(&[5, 3, 9], &[0.25, 0.5, 0.25]), vec![3, 5, 9]);
    }
}
