//! Line-oriented `key = value` run configuration.
//!
//! Values come from three layers: built-in defaults, a config file, and
//! `--set key=value` overrides on the command line, later layers winning.
//! `#` starts a comment. `K`, `D` and `F` are accepted as aliases of
//! `layers`, `dim` and `bilinear`.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::graph::EncodingVariant;
use crate::model::EncoderConfig;
use crate::search::FilterMode;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Cli,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Line(n) => write!(f, "line {n}"),
            Self::Cli => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { key: String, origin: Origin },
    #[error("{origin}: `{key}` {msg}")]
    Invalid { key: String, origin: Origin, msg: String },
    #[error("{origin}: expected `key = value`, got `{text}`")]
    Syntax { text: String, origin: Origin },
    #[error("cannot read {path}: {msg}")]
    Read { path: String, msg: String },
}

/// Everything a `train` or `eval` run needs besides file paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub iterations: usize,
    /// Per-pair step limit used by `eval` when no flag overrides it.
    pub eval_steps: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            iterations: 50,
            eval_steps: 50_000,
        }
    }
}

fn canonical(key: &str) -> &str {
    match key {
        "K" => "layers",
        "D" => "dim",
        "F" => "bilinear",
        other => other,
    }
}

fn scalar<T: FromStr>(value: &str, what: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("expects {what}, got `{value}`"))
}

fn list(value: &str) -> Result<Vec<usize>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar::<usize>(s, "a comma-separated list of integers"))
        .collect()
}

fn positive(v: usize) -> Result<usize, String> {
    if v == 0 {
        Err("must be positive".into())
    } else {
        Ok(v)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one assignment; `key` may be an alias.
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let key = canonical(key);
        let int = || scalar::<usize>(value, "a non-negative integer");
        let long = || scalar::<u64>(value, "a non-negative integer");
        let real = || scalar::<f64>(value, "a number");
        let flag = || scalar::<bool>(value, "true or false");
        let e = &mut self.encoder;
        let t = &mut self.train;
        let o = &mut t.optimizer;
        let res: Result<(), String> = match key {
            "layers" => int().and_then(positive).map(|v| e.layers = v),
            "dim" => int().and_then(positive).map(|v| e.dim = v),
            "bilinear" => int().and_then(positive).map(|v| e.bilinear = v),
            "attention_hidden" => int().and_then(positive).map(|v| e.attention_hidden = v),
            "policy_hidden" => list(value).map(|v| e.policy_hidden = v),
            "encoding" => match value {
                "ldp" => Ok(EncodingVariant::Ldp),
                "constant" => Ok(EncodingVariant::Constant),
                _ => Err(format!("expects ldp or constant, got `{value}`")),
            }
            .map(|v| e.encoding = v),
            "query_readout" => flag().map(|v| e.query_readout = v),
            "lr" => real().map(|v| o.lr = v),
            "beta1" => real().map(|v| o.beta1 = v),
            "beta2" => real().map(|v| o.beta2 = v),
            "eps" => real().map(|v| o.eps = v),
            "weight_decay" => real().map(|v| o.weight_decay = v),
            "clip_norm" => real().map(|v| o.clip_norm = v),
            "margin" => real().map(|v| t.margin = v),
            "curriculum" => list(value).map(|v| t.curriculum = v),
            "search_steps" => long().map(|v| t.search_steps = v),
            "solution_cap" => long().map(|v| t.solution_cap = v),
            "truth_fallback" => flag().map(|v| t.truth_fallback = v),
            "batch_size" => int().and_then(positive).map(|v| t.batch_size = v),
            "batches_per_iteration" => int().map(|v| t.batches_per_iteration = v),
            "buffer_capacity" => int().and_then(positive).map(|v| t.buffer_capacity = v),
            "validation_sizes" => list(value).map(|v| t.validation_sizes = v),
            "validation_per_size" => int().map(|v| t.validation_per_size = v),
            "validation_steps" => long().map(|v| t.validation_steps = v),
            "validate_every" => int().map(|v| t.validate_every = v),
            "p_levels" => int().map(|v| t.p_levels = v),
            "filter" => match value {
                "ldf" => Ok(FilterMode::Ldf),
                "ldf+nlf" => Ok(FilterMode::LdfNlf),
                _ => Err(format!("expects ldf or ldf+nlf, got `{value}`")),
            }
            .map(|v| t.filter = v),
            "seed" => long().map(|v| t.seed = v),
            "iterations" => int().map(|v| self.iterations = v),
            "eval_steps" => long().map(|v| self.eval_steps = v),
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_owned(),
                    origin,
                })
            }
        };
        res.map_err(|msg| ConfigError::Invalid {
            key: key.to_owned(),
            origin,
            msg,
        })
    }

    /// Applies the assignments in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::Line(i + 1);
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                text: line.to_owned(),
                origin: origin.clone(),
            })?;
            self.set(k.trim(), v.trim(), origin)?;
        }
        Ok(())
    }

    /// Canonical `key = value` text that [`RunConfig::apply_text`] reads back
    /// to an equal config.
    pub fn to_text(&self) -> String {
        let e = &self.encoder;
        let t = &self.train;
        let o = &t.optimizer;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("layers", e.layers.to_string());
        put("dim", e.dim.to_string());
        put("bilinear", e.bilinear.to_string());
        put("attention_hidden", e.attention_hidden.to_string());
        put("policy_hidden", join(&e.policy_hidden));
        put(
            "encoding",
            match e.encoding {
                EncodingVariant::Ldp => "ldp",
                EncodingVariant::Constant => "constant",
            }
            .into(),
        );
        put("query_readout", e.query_readout.to_string());
        put("lr", o.lr.to_string());
        put("beta1", o.beta1.to_string());
        put("beta2", o.beta2.to_string());
        put("eps", o.eps.to_string());
        put("weight_decay", o.weight_decay.to_string());
        put("clip_norm", o.clip_norm.to_string());
        put("margin", t.margin.to_string());
        put("curriculum", join(&t.curriculum));
        put("search_steps", t.search_steps.to_string());
        put("solution_cap", t.solution_cap.to_string());
        put("truth_fallback", t.truth_fallback.to_string());
        put("batch_size", t.batch_size.to_string());
        put("batches_per_iteration", t.batches_per_iteration.to_string());
        put("buffer_capacity", t.buffer_capacity.to_string());
        put("validation_sizes", join(&t.validation_sizes));
        put("validation_per_size", t.validation_per_size.to_string());
        put("validation_steps", t.validation_steps.to_string());
        put("validate_every", t.validate_every.to_string());
        put("p_levels", t.p_levels.to_string());
        put(
            "filter",
            match t.filter {
                FilterMode::Ldf => "ldf",
                FilterMode::LdfNlf => "ldf+nlf",
            }
            .into(),
        );
        put("seed", t.seed.to_string());
        put("iterations", self.iterations.to_string());
        put("eval_steps", self.eval_steps.to_string());
        s
    }
}

/// Splits a `key=value` override.
pub fn parse_override(text: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = text.split_once('=').ok_or_else(|| ConfigError::Syntax {
        text: text.to_owned(),
        origin: Origin::Cli,
    })?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

/// Defaults, then `path` if given, then `overrides` in order. The resolved
/// configuration is logged.
pub fn config_load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        let text = fs::read_to_string(p).map_err(|e| ConfigError::Read {
            path: p.display().to_string(),
            msg: e.to_string(),
        })?;
        cfg.apply_text(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v, Origin::Cli)?;
    }
    cfg.encoder.validate().map_err(|e| ConfigError::Invalid {
        key: "encoder".into(),
        origin: Origin::Cli,
        msg: e.to_string(),
    })?;
    log::info!("resolved configuration:\n{}", cfg.to_text());
    Ok(cfg)
}
