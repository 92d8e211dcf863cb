use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use super::TrainingSample;

/// Bounded FIFO of training samples.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<TrainingSample>,
    evicted: usize,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 128;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs a positive capacity");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
            evicted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn evicted(&self) -> usize {
        self.evicted
    }

    pub fn push(&mut self, sample: TrainingSample) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.evicted += 1;
        }
        self.items.push_back(sample);
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingSample> {
        self.items.iter()
    }

    /// Up to `batch` distinct samples, uniformly without replacement.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<&TrainingSample> {
        let n = batch.min(self.items.len());
        let mut idx = index::sample(rng, self.items.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.items[i]).collect()
    }
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY)
    }
}
