//! The query-conditioned matching network: stacked propagation and matching
//! layers, jumping-knowledge MAX, layer norm, an attention state readout,
//! and a bilinear policy head.
//!
//! Two evaluation paths share one set of kernels:
//!
//! * the tape path ([`PolicyModel::tape_intra`] and friends) builds the full
//!   differentiable graph and is what training uses;
//! * the cached path ([`EmbeddingCache`] + [`PolicyModel::encode`]) reuses
//!   the state-independent propagation outputs across search states.
//!
//! Both produce bit-identical embeddings and logits.

mod cache;
mod context;
mod network;
mod policy;

pub use cache::{policy_distribution, CacheKey, EmbeddingCache, Embeddings};
pub use context::StateContext;
pub use network::{GraphIndex, IntraVars, Role, StateVars};
pub use policy::NeuralPolicy;

use std::fmt;

use crate::graph::EncodingVariant;
use crate::tensor::{read_params, write_params, CheckpointError, ParamId, ParamStore, TensorError};

/// Width of the structural part of the initial encoding.
pub const FEATURE_DIM: usize = 5;
/// Width of the selected/unselected one-hot.
pub const FLAG_DIM: usize = 2;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("checkpoint does not match configuration: {0}")]
    Mismatch(String),
    #[error("embedding cache was prepared for a different problem")]
    StaleCache,
    #[error("empty action list")]
    EmptyActions,
    #[error("target {0} has no embedding row")]
    MissingTarget(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub dim: usize,
    pub bilinear: usize,
    pub attention_hidden: usize,
    pub policy_hidden: Vec<usize>,
    pub encoding: EncodingVariant,
    /// Concatenate the query readout into messages sent to target nodes.
    pub query_readout: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 8,
            dim: 16,
            bilinear: 32,
            attention_hidden: 4,
            policy_hidden: vec![32, 16, 8],
            encoding: EncodingVariant::Ldp,
            query_readout: true,
        }
    }
}

impl EncoderConfig {
    /// `[D, hidden, 1]`.
    pub fn attention_dims(&self) -> Vec<usize> {
        vec![self.dim, self.attention_hidden, 1]
    }

    /// `[F + D, hidden..., 1]`.
    pub fn policy_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.bilinear + self.dim];
        dims.extend(&self.policy_hidden);
        dims.push(1);
        dims
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("layers", self.layers),
            ("dim", self.dim),
            ("bilinear", self.bilinear),
            ("attention_hidden", self.attention_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.policy_hidden.contains(&0) {
            return Err(ModelError::Config("policy hidden widths must be positive".into()));
        }
        Ok(())
    }

    fn combine_g_input(&self) -> usize {
        let msg = if self.query_readout { 2 * self.dim } else { self.dim };
        msg + self.dim + FLAG_DIM
    }

    fn combine_q_input(&self) -> usize {
        2 * self.dim + FLAG_DIM
    }

    /// Parses the payload of a checkpoint `CFG` line.
    pub fn from_header(text: &str) -> Result<Self, ModelError> {
        let mut cfg = Self::default();
        for tok in text.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| ModelError::Config(format!("bad token `{tok}`")))?;
            let num = || {
                value
                    .parse::<usize>()
                    .map_err(|_| ModelError::Config(format!("`{key}` expects an integer")))
            };
            match key {
                "layers" => cfg.layers = num()?,
                "dim" => cfg.dim = num()?,
                "bilinear" => cfg.bilinear = num()?,
                "attention_hidden" => cfg.attention_hidden = num()?,
                "policy_hidden" => {
                    cfg.policy_hidden = value
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| ModelError::Config("bad policy_hidden".into()))?
                }
                "encoding" => {
                    cfg.encoding = match value {
                        "ldp" => EncodingVariant::Ldp,
                        "constant" => EncodingVariant::Constant,
                        _ => return Err(ModelError::Config(format!("unknown encoding `{value}`"))),
                    }
                }
                "query_readout" => {
                    cfg.query_readout = value
                        .parse()
                        .map_err(|_| ModelError::Config("query_readout expects true/false".into()))?
                }
                _ => return Err(ModelError::Config(format!("unknown key `{key}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for EncoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hidden: Vec<String> = self.policy_hidden.iter().map(ToString::to_string).collect();
        let encoding = match self.encoding {
            EncodingVariant::Ldp => "ldp",
            EncodingVariant::Constant => "constant",
        };
        write!(
            f,
            "layers={} dim={} bilinear={} attention_hidden={} policy_hidden={} encoding={} query_readout={}",
            self.layers,
            self.dim,
            self.bilinear,
            self.attention_hidden,
            hidden.join(","),
            encoding,
            self.query_readout
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerIds {
    pub sage: Linear,
    pub key_q: Linear,
    pub key_g: Linear,
    pub val_q: Linear,
    pub val_g: Linear,
    pub comb_q: [Linear; 2],
    pub comb_g: [Linear; 2],
}

#[derive(Debug, Clone)]
pub(crate) struct ModelIds {
    pub layers: Vec<LayerIds>,
    pub norm_gamma: ParamId,
    pub norm_beta: ParamId,
    pub att: Vec<Linear>,
    pub bil: ParamId,
    pub pol: Vec<Linear>,
}

/// Every parameter name with its shape, in registration order.
fn layout(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.dim;
    let mut out = Vec::new();
    let mut lin = |name: String, i: usize, o: usize| {
        out.push((format!("{name}.w"), vec![i, o]));
        out.push((format!("{name}.b"), vec![1, o]));
    };
    for k in 0..cfg.layers {
        let input = if k == 0 { FEATURE_DIM } else { d };
        lin(format!("l{k}.sage"), 2 * input, d);
        for p in ["key_q", "key_g", "val_q", "val_g"] {
            lin(format!("l{k}.{p}"), d, d);
        }
        lin(format!("l{k}.comb_q.0"), cfg.combine_q_input(), d);
        lin(format!("l{k}.comb_q.1"), d, d);
        lin(format!("l{k}.comb_g.0"), cfg.combine_g_input(), d);
        lin(format!("l{k}.comb_g.1"), d, d);
    }
    let att = cfg.attention_dims();
    for (i, w) in att.windows(2).enumerate() {
        lin(format!("att.{i}"), w[0], w[1]);
    }
    let pol = cfg.policy_dims();
    for (i, w) in pol.windows(2).enumerate() {
        lin(format!("pol.{i}"), w[0], w[1]);
    }
    out.push(("norm.gamma".into(), vec![1, d]));
    out.push(("norm.beta".into(), vec![1, d]));
    out.push(("bil.w".into(), vec![cfg.bilinear, d, d]));
    out
}

/// Configuration plus parameters.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    config: EncoderConfig,
    params: ParamStore,
    ids: ModelIds,
}

impl PolicyModel {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, shape) in layout(&config) {
            params.init(&name, &shape, seed)?;
        }
        Self::from_params(config, params)
    }

    /// Binds an existing store, checking every expected name and shape.
    pub fn from_params(config: EncoderConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != params.len() {
            return Err(ModelError::Mismatch(format!(
                "expected {} tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let id = params.id(name).map_err(|_| ModelError::Mismatch(format!("missing `{name}`")))?;
            if params.value(id).shape() != shape.as_slice() {
                return Err(ModelError::Mismatch(format!(
                    "`{name}` has shape {:?}, expected {shape:?}",
                    params.value(id).shape()
                )));
            }
        }
        let lin = |name: String| -> Linear {
            Linear {
                w: params.id(&format!("{name}.w")).expect("checked above"),
                b: params.id(&format!("{name}.b")).expect("checked above"),
            }
        };
        let layers = (0..config.layers)
            .map(|k| LayerIds {
                sage: lin(format!("l{k}.sage")),
                key_q: lin(format!("l{k}.key_q")),
                key_g: lin(format!("l{k}.key_g")),
                val_q: lin(format!("l{k}.val_q")),
                val_g: lin(format!("l{k}.val_g")),
                comb_q: [lin(format!("l{k}.comb_q.0")), lin(format!("l{k}.comb_q.1"))],
                comb_g: [lin(format!("l{k}.comb_g.0")), lin(format!("l{k}.comb_g.1"))],
            })
            .collect();
        let ids = ModelIds {
            layers,
            norm_gamma: params.id("norm.gamma")?,
            norm_beta: params.id("norm.beta")?,
            att: (0..config.attention_dims().len() - 1).map(|i| lin(format!("att.{i}"))).collect(),
            bil: params.id("bil.w")?,
            pol: (0..config.policy_dims().len() - 1).map(|i| lin(format!("pol.{i}"))).collect(),
        };
        Ok(Self { config, params, ids })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub(crate) fn ids(&self) -> &ModelIds {
        &self.ids
    }

    /// Checkpoint text: a `CFG` line followed by every parameter.
    pub fn save(&self) -> String {
        write_params(&self.params, &self.config.to_string())
    }

    pub fn load(text: &str) -> Result<Self, ModelError> {
        let (header, params) = read_params(text)?;
        Self::from_params(EncoderConfig::from_header(&header)?, params)
    }

    /// Hash of every parameter bit, used to invalidate embedding caches.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for id in self.params.ids() {
            for x in self.params.value(id).data() {
                h = (h ^ x.to_bits()).wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dims() {
        let cfg = EncoderConfig::default();
        assert_eq!(cfg.attention_dims(), vec![16, 4, 1]);
        assert_eq!(cfg.policy_dims(), vec![48, 32, 16, 8, 1]);
    }

    #[test]
    fn header_round_trip() {
        let cfg = EncoderConfig {
            layers: 2,
            dim: 8,
            encoding: EncodingVariant::Constant,
            query_readout: false,
            ..EncoderConfig::default()
        };
        assert_eq!(EncoderConfig::from_header(&cfg.to_string()).unwrap(), cfg);
        assert!(EncoderConfig::from_header("layers=0").is_err());
        assert!(EncoderConfig::from_header("depth=3").is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = EncoderConfig { layers: 2, dim: 8, ..EncoderConfig::default() };
        let model = PolicyModel::new(cfg, 5).unwrap();
        let text = model.save();
        let back = PolicyModel::load(&text).unwrap();
        assert_eq!(back.config(), model.config());
        assert!(back.params().bitwise_eq(model.params()));
        assert_eq!(back.fingerprint(), model.fingerprint());
    }

    #[test]
    fn mismatched_checkpoint_is_rejected() {
        let small = PolicyModel::new(EncoderConfig { layers: 1, ..EncoderConfig::default() }, 0).unwrap();
        let text = small.save().replacen("layers=1", "layers=2", 1);
        assert!(matches!(PolicyModel::load(&text), Err(ModelError::Mismatch(_))));
    }
}
