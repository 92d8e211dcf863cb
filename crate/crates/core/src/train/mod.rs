//! Self-supervised training: signals harvested from retained search trees,
//! look-ahead and max-margin losses, AdamW, a replay buffer, and
//! validation-gated checkpoints.

mod loss;
mod optim;
mod replay;
mod signals;
mod trainer;

pub use loss::{
    gradcheck_fixture, look_ahead_from_logits, max_margin_from_embeddings, total_loss, total_loss_gradient_check,
    BatchLoss, LossVars, PROB_CLAMP,
};
pub use optim::{adamw_step, clip_grad_norm, AdamWConfig, OptimizerState, StepOutcome};
pub use replay::ReplayBuffer;
pub use signals::{collect_training_signals, sample_negatives, truth_path_tree, Episode, Positive, TrainingSample};
pub use trainer::{
    validation_reward, Checkpoint, IterationReport, TrainConfig, TrainLog, Trainer, CURRICULUM_SIZES,
    VALIDATION_SIZES,
};

use crate::graph::SampleError;
use crate::model::ModelError;
use crate::search::SearchError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training log: {0}")]
    Log(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
