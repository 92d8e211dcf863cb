//! Evaluation harness, solve-time curves, run configuration and the
//! command-line front end.

mod cli;
mod config;
mod curves;
mod harness;

use std::path::Path;

pub use cli::{cli_dispatch, Cli, Command};
pub use config::{config_load, parse_override, ConfigError, Origin, RunConfig};
pub use curves::{aggregate_curves, read_curves, write_curves, CurvePoint};
pub use harness::{
    evaluate_pairs, load_model, load_query_dir, read_records, run_eval_harness, write_records, EvalPair, EvalRecord,
    EvalRun, EvalSettings, PolicyKind, QUERY_EXTENSION, VIRTUAL_MS_PER_STEP,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Search(#[from] crate::search::SearchError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Sample(#[from] crate::graph::SampleError),
}

impl BenchError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<std::io::Error> for BenchError {
    fn from(source: std::io::Error) -> Self {
        Self::Io {
            path: "<stream>".into(),
            source,
        }
    }
}
