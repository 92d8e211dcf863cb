//! Short self-supervised training run on a synthetic target.
//!
//! Each iteration samples a query, searches it with the current model,
//! turns the search tree into look-ahead samples, and takes a few AdamW
//! steps from the replay buffer. The model is kept only when the
//! validation reward improves. Per-iteration rows go to stdout as CSV.
//!
//! ```bash
//! cargo run --release --example train_policy
//! ```

use std::sync::Arc;

use submatch::graph::synth::preferential_attachment;
use submatch::model::{EncoderConfig, PolicyModel};
use submatch::train::{TrainConfig, TrainLog, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let target = Arc::new(preferential_attachment(400, 3, 4, 3));
    let encoder = EncoderConfig { layers: 3, dim: 8, ..EncoderConfig::default() };
    let config = TrainConfig {
        curriculum: vec![8, 12],
        search_steps: 2_000,
        batch_size: 16,
        validation_sizes: vec![8, 16],
        validation_steps: 300,
        seed: 3,
        ..TrainConfig::default()
    };
    let model = PolicyModel::new(encoder, 3)?;
    let mut trainer = Trainer::new(target, model, config, Vec::new())?;
    let mut log = TrainLog::new(std::io::stdout());
    trainer.run(8, Some(&mut log))?;
    let best = trainer.best();
    eprintln!("best reward {:.3} from iteration {}", best.reward, best.iteration);
    Ok(())
}
