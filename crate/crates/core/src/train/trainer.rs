use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{isomorphic_check, p_schedule, random_walk_sample, LabeledGraph, NodeId, SampledQuery};
use crate::model::{NeuralPolicy, PolicyModel};
use crate::search::{backtracking_search, FilterMode, SearchBudget};
use crate::tensor::{ParamStore, Tape};

use super::{
    adamw_step, collect_training_signals, sample_negatives, truth_path_tree, AdamWConfig, BatchLoss, Episode,
    OptimizerState, ReplayBuffer, StepOutcome, TrainError,
};

/// Query sizes a training query may be drawn from.
pub const CURRICULUM_SIZES: [usize; 8] = [8, 16, 24, 32, 48, 64, 96, 128];
/// Three validation queries of each size.
pub const VALIDATION_SIZES: [usize; 5] = [8, 16, 32, 64, 128];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub curriculum: Vec<usize>,
    /// Recursive-call budget of a signal-collecting search.
    pub search_steps: u64,
    pub solution_cap: u64,
    /// Replay the sampled truth mapping when the search finds no match.
    pub truth_fallback: bool,
    pub batch_size: usize,
    pub batches_per_iteration: usize,
    pub buffer_capacity: usize,
    pub margin: f64,
    pub optimizer: AdamWConfig,
    pub validation_sizes: Vec<usize>,
    pub validation_per_size: usize,
    pub validation_steps: u64,
    pub validate_every: usize,
    /// Walk parameters are drawn from `p_schedule(i, p_levels)`.
    pub p_levels: usize,
    pub filter: FilterMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            curriculum: CURRICULUM_SIZES.to_vec(),
            search_steps: 20_000,
            solution_cap: 16,
            truth_fallback: true,
            batch_size: 32,
            batches_per_iteration: 4,
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            margin: 1.0,
            optimizer: AdamWConfig::default(),
            validation_sizes: VALIDATION_SIZES.to_vec(),
            validation_per_size: 3,
            validation_steps: 1_000,
            validate_every: 1,
            p_levels: 50,
            filter: FilterMode::LdfNlf,
            seed: 0,
        }
    }
}

/// Best parameters seen so far and the validation reward they earned.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub reward: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub query_size: usize,
    pub search_steps: u64,
    pub solutions: usize,
    pub used_truth: bool,
    pub samples_added: usize,
    pub optimizer_steps: usize,
    pub skipped_steps: usize,
    pub excluded_pairs: usize,
    /// Means over this iteration's batches; `None` without any batch.
    pub loss_la: Option<f64>,
    pub loss_mm: Option<f64>,
    pub loss_total: Option<f64>,
    pub buffer_size: usize,
    pub val_reward: Option<f64>,
    pub accepted: bool,
}

/// Mean deepest `|M|` reached per validation episode.
pub fn validation_reward(model: &PolicyModel, episodes: &[Arc<Episode>], steps: u64) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    let budget = SearchBudget::steps(steps);
    let total: usize = episodes
        .iter()
        .map(|ep| {
            let mut policy = NeuralPolicy::new(model);
            backtracking_search(&ep.problem(), &mut policy, &budget, false).max_depth
        })
        .sum();
    total as f64 / episodes.len() as f64
}

/// Training state bound to one target graph.
pub struct Trainer {
    config: TrainConfig,
    target: Arc<LabeledGraph>,
    model: PolicyModel,
    best: Checkpoint,
    opt: OptimizerState,
    buffer: ReplayBuffer,
    validation: Vec<Arc<Episode>>,
    excluded: Vec<LabeledGraph>,
    rng: ChaCha8Rng,
    iteration: usize,
    history: Vec<IterationReport>,
}

impl Trainer {
    /// Samples the validation set (disjoint up to isomorphism from
    /// `excluded`) and scores the initial model as the first checkpoint.
    pub fn new(
        target: Arc<LabeledGraph>,
        model: PolicyModel,
        config: TrainConfig,
        excluded: Vec<LabeledGraph>,
    ) -> Result<Self, TrainError> {
        if config.curriculum.is_empty() {
            return Err(TrainError::Config("empty curriculum".into()));
        }
        if config.batch_size == 0 || config.buffer_capacity == 0 || config.p_levels < 2 {
            return Err(TrainError::Config("batch size, buffer capacity and p levels must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut validation: Vec<Arc<Episode>> = Vec::new();
        for &size in &config.validation_sizes {
            for _ in 0..config.validation_per_size {
                let seen: Vec<&LabeledGraph> = excluded.iter().chain(validation.iter().map(|e| &e.query)).collect();
                let s = draw_query(&target, size, config.p_levels, &seen, &mut rng)?;
                validation.push(Arc::new(Episode::new(s.query, Arc::clone(&target), config.filter)?));
            }
        }
        let reward = validation_reward(&model, &validation, config.validation_steps);
        log::info!("initial validation reward {reward:.4}");
        let best = Checkpoint {
            params: model.params().clone(),
            reward,
            iteration: 0,
        };
        let opt = OptimizerState::new(model.params(), config.optimizer);
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        Ok(Self {
            config,
            target,
            model,
            best,
            opt,
            buffer,
            validation,
            excluded,
            rng,
            iteration: 0,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &PolicyModel {
        &self.model
    }

    pub fn best(&self) -> &Checkpoint {
        &self.best
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }

    pub fn validation(&self) -> &[Arc<Episode>] {
        &self.validation
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn history(&self) -> &[IterationReport] {
        &self.history
    }

    /// The model holding the best checkpoint's parameters.
    pub fn into_best_model(mut self) -> PolicyModel {
        self.model
            .params_mut()
            .copy_values_from(&self.best.params)
            .expect("checkpoint shares the model layout");
        self.model
    }

    fn sample_training_query(&mut self) -> Result<SampledQuery, TrainError> {
        let size = self.config.curriculum[self.rng.gen_range(0..self.config.curriculum.len())];
        let seen: Vec<&LabeledGraph> = self
            .excluded
            .iter()
            .chain(self.validation.iter().map(|e| &e.query))
            .collect();
        draw_query(&self.target, size, self.config.p_levels, &seen, &mut self.rng)
    }

    /// Search, collect, and update. Validation is separate.
    pub fn train_iteration(&mut self) -> Result<IterationReport, TrainError> {
        self.iteration += 1;
        let sampled = self.sample_training_query()?;
        let truth: Vec<NodeId> = sampled.truth_mapping.clone();
        let episode = Arc::new(Episode::new(sampled.query, Arc::clone(&self.target), self.config.filter)?);
        let budget = SearchBudget::steps(self.config.search_steps).with_solution_cap(self.config.solution_cap);
        let outcome = {
            let mut policy = NeuralPolicy::new(&self.model);
            backtracking_search(&episode.problem(), &mut policy, &budget, true)
        };
        let tree = outcome.tree.unwrap_or_default();
        let mut samples = collect_training_signals(&episode, &tree);
        let mut used_truth = false;
        if samples.is_empty() && self.config.truth_fallback {
            samples = collect_training_signals(&episode, &truth_path_tree(&episode, &truth));
            used_truth = true;
        }
        if samples.is_empty() {
            log::info!("iteration {}: no training signal", self.iteration);
        }
        let samples_added = samples.len();
        for mut s in samples {
            let actions = s.actions();
            s.negatives = sample_negatives(&s, &actions, self.rng.gen());
            self.buffer.push(s);
        }

        let mut report = IterationReport {
            iteration: self.iteration,
            query_size: episode.query.num_nodes(),
            search_steps: outcome.steps,
            solutions: outcome.matches.len(),
            used_truth,
            samples_added,
            optimizer_steps: 0,
            skipped_steps: 0,
            excluded_pairs: 0,
            loss_la: None,
            loss_mm: None,
            loss_total: None,
            buffer_size: self.buffer.len(),
            val_reward: None,
            accepted: false,
        };
        let (mut la, mut mm, mut total, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..self.config.batches_per_iteration {
            if self.buffer.is_empty() {
                break;
            }
            let batch = self.buffer.sample(self.config.batch_size, &mut self.rng);
            self.model.params_mut().zero_grads();
            let mut tape = Tape::new();
            let built = BatchLoss::new(&self.model, self.config.margin).batch_loss(&mut tape, &batch);
            let loss = match built {
                Ok(l) => l,
                Err(e) => {
                    log::warn!("iteration {}: batch skipped: {e}", self.iteration);
                    report.skipped_steps += 1;
                    continue;
                }
            };
            report.excluded_pairs += loss.excluded;
            let values = (tape.scalar_value(loss.la), tape.scalar_value(loss.mm), tape.scalar_value(loss.total));
            if let Err(e) = tape.backward(loss.total, self.model.params_mut()) {
                log::warn!("iteration {}: backward failed: {e}", self.iteration);
                report.skipped_steps += 1;
                continue;
            }
            match adamw_step(self.model.params_mut(), &mut self.opt) {
                StepOutcome::Applied { .. } => report.optimizer_steps += 1,
                StepOutcome::Skipped => report.skipped_steps += 1,
            }
            la += values.0;
            mm += values.1;
            total += values.2;
            batches += 1;
        }
        if batches > 0 {
            let n = batches as f64;
            report.loss_la = Some(la / n);
            report.loss_mm = Some(mm / n);
            report.loss_total = Some(total / n);
        }
        Ok(report)
    }

    /// Scores the current model; keeps it only on strict improvement,
    /// otherwise restores the best checkpoint's parameters.
    pub fn validate_and_checkpoint(&mut self) -> (f64, bool) {
        let reward = validation_reward(&self.model, &self.validation, self.config.validation_steps);
        if reward > self.best.reward {
            self.best = Checkpoint {
                params: self.model.params().clone(),
                reward,
                iteration: self.iteration,
            };
            (reward, true)
        } else {
            self.model
                .params_mut()
                .copy_values_from(&self.best.params)
                .expect("checkpoint shares the model layout");
            (reward, false)
        }
    }

    /// One training iteration plus validation when due; the report is
    /// appended to the history and returned.
    pub fn step(&mut self) -> Result<IterationReport, TrainError> {
        let mut report = self.train_iteration()?;
        if self.config.validate_every > 0 && report.iteration % self.config.validate_every == 0 {
            let (reward, accepted) = self.validate_and_checkpoint();
            report.val_reward = Some(reward);
            report.accepted = accepted;
        }
        log::info!(
            "iter {} size {} solutions {} samples {} loss {:?} val {:?} accepted {}",
            report.iteration,
            report.query_size,
            report.solutions,
            report.samples_added,
            report.loss_total,
            report.val_reward,
            report.accepted
        );
        self.history.push(report.clone());
        Ok(report)
    }

    /// Runs `iterations` steps, streaming CSV rows to `log` when given.
    pub fn run<W: Write>(&mut self, iterations: usize, mut log: Option<&mut TrainLog<W>>) -> Result<(), TrainError> {
        for _ in 0..iterations {
            let report = self.step()?;
            if let Some(l) = log.as_deref_mut() {
                l.write(&report)?;
            }
        }
        Ok(())
    }
}

fn draw_query(
    target: &LabeledGraph,
    size: usize,
    p_levels: usize,
    seen: &[&LabeledGraph],
    rng: &mut ChaCha8Rng,
) -> Result<SampledQuery, TrainError> {
    const ATTEMPTS: usize = 64;
    for _ in 0..ATTEMPTS {
        let p = p_schedule(rng.gen_range(1..=p_levels), p_levels)?;
        let s = random_walk_sample(target, size, p, rng.gen())?;
        if !seen.iter().any(|g| isomorphic_check(g, &s.query)) {
            return Ok(s);
        }
    }
    Err(TrainError::Config(format!(
        "could not sample a {size}-node query distinct from the held-out queries"
    )))
}

#[derive(serde::Serialize)]
struct LogRow {
    iter: usize,
    loss_la: Option<f64>,
    loss_mm: Option<f64>,
    loss_total: Option<f64>,
    buffer_size: usize,
    val_reward: Option<f64>,
    accepted: bool,
}

/// CSV training log, one row per iteration.
pub struct TrainLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> TrainLog<W> {
    pub fn new(out: W) -> Self {
        Self {
            writer: csv::Writer::from_writer(out),
        }
    }

    pub fn write(&mut self, r: &IterationReport) -> Result<(), TrainError> {
        self.writer.serialize(LogRow {
            iter: r.iteration,
            loss_la: r.loss_la,
            loss_mm: r.loss_mm,
            loss_total: r.loss_total,
            buffer_size: r.buffer_size,
            val_reward: r.val_reward,
            accepted: r.accepted,
        })?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, TrainError> {
        self.writer.into_inner().map_err(|e| TrainError::Io(e.into_error()))
    }
}
