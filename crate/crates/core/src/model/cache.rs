use std::collections::HashMap;

use crate::graph::{EncodingVariant, LabeledGraph, NodeId};
use crate::search::{CandidateSets, SearchProblem};
use crate::tensor::kernels::{self, affine, elu};
use crate::tensor::{Tape, Tensor};

use super::network::{flag_rows, GraphIndex, Role};
use super::{Linear, ModelError, PolicyModel, StateContext, FLAG_DIM, LAYER_NORM_EPS};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn mix(h: u64, x: u64) -> u64 {
    (h ^ x).wrapping_mul(FNV_PRIME)
}

fn graph_hash(g: &LabeledGraph) -> u64 {
    let mut h = mix(FNV_OFFSET, g.num_nodes() as u64);
    for &l in g.labels() {
        h = mix(h, u64::from(l));
    }
    for (a, b) in g.edges() {
        h = mix(mix(h, a as u64), b as u64);
    }
    h
}

fn candidate_hash(c: &CandidateSets) -> u64 {
    let mut h = FNV_OFFSET;
    for u in 0..c.num_query_nodes() {
        h = mix(h, u64::MAX);
        for &v in c.get(u) {
            h = mix(h, v as u64);
        }
    }
    h
}

/// Identifies what a cache was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    query: u64,
    target: u64,
    candidates: u64,
    encoding: EncodingVariant,
    model: u64,
}

impl CacheKey {
    pub fn new(model: &PolicyModel, problem: &SearchProblem<'_>) -> Self {
        Self {
            query: graph_hash(problem.query),
            target: graph_hash(problem.target),
            candidates: candidate_hash(problem.candidates),
            encoding: model.config().encoding,
            model: model.fingerprint(),
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    q_h: Vec<f64>,
    q_key: Vec<f64>,
    q_val: Vec<f64>,
    readout: Vec<f64>,
    g_h: Vec<f64>,
    g_key: Vec<f64>,
    g_val: Vec<f64>,
    // scores[u][i] = key_q(u) · key_g(C(u)[i])
    scores: Vec<Vec<f64>>,
}

/// Per-search store of the state-independent propagation outputs.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingCache {
    key: Option<CacheKey>,
    num_query: usize,
    num_target: usize,
    layers: Vec<LayerCache>,
    builds: usize,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_ready(&self) -> bool {
        self.key.is_some()
    }

    /// Number of times the propagation stack has been computed.
    pub fn builds(&self) -> usize {
        self.builds
    }

    pub fn clear(&mut self) {
        *self = Self { builds: self.builds, ..Self::default() };
    }

    /// Makes the cache valid for `(model, problem)`; returns `true` on a hit.
    pub fn ensure(&mut self, model: &PolicyModel, problem: &SearchProblem<'_>) -> Result<bool, ModelError> {
        let key = CacheKey::new(model, problem);
        if self.key == Some(key) {
            return Ok(true);
        }
        self.key = None;
        let encoding = model.config().encoding;
        let qi = GraphIndex::new(problem.query, encoding);
        let gi = GraphIndex::new(problem.target, encoding);
        let mut tape = Tape::new();
        let ql = model.tape_intra(&mut tape, &qi, Role::Query)?;
        let gl = model.tape_intra(&mut tape, &gi, Role::Target)?;
        let readouts = model.tape_readouts(&mut tape, &ql)?;
        let d = model.config().dim;
        let c = problem.candidates;
        self.layers = (0..ql.len())
            .map(|k| {
                let data = |v| tape.value(v).data().to_vec();
                let q_key = data(ql[k].key);
                let g_key = data(gl[k].key);
                let scores = (0..problem.query.num_nodes())
                    .map(|u| {
                        let ku = &q_key[u * d..(u + 1) * d];
                        c.get(u).iter().map(|&v| kernels::dot(ku, &g_key[v * d..(v + 1) * d])).collect()
                    })
                    .collect();
                LayerCache {
                    q_h: data(ql[k].h),
                    q_val: data(ql[k].val),
                    readout: data(readouts[k]),
                    g_h: data(gl[k].h),
                    g_val: data(gl[k].val),
                    q_key,
                    g_key,
                    scores,
                }
            })
            .collect();
        self.num_query = problem.query.num_nodes();
        self.num_target = problem.target.num_nodes();
        self.key = Some(key);
        self.builds += 1;
        Ok(false)
    }
}

/// Final embeddings of every query node and of the requested targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub query: Tensor,
    pub targets: Vec<NodeId>,
    pub target: Tensor,
    rows: HashMap<NodeId, usize>,
}

impl Embeddings {
    pub fn target_row(&self, v: NodeId) -> Option<usize> {
        self.rows.get(&v).copied()
    }
}

/// Softmax over a logit list.
pub fn policy_distribution(logits: &[f64]) -> Vec<f64> {
    kernels::segment_softmax(logits, &vec![0; logits.len()])
}

fn param_data(model: &PolicyModel, id: usize) -> &[f64] {
    model.params().value(id).data()
}

fn mlp(model: &PolicyModel, mut x: Vec<f64>, rows: usize, layers: &[Linear]) -> Vec<f64> {
    for (i, lin) in layers.iter().enumerate() {
        let w = model.params().value(lin.w);
        let (k, c) = (w.shape()[0], w.shape()[1]);
        x = affine(&x, w.data(), param_data(model, lin.b), rows, k, c);
        if i + 1 < layers.len() {
            x.iter_mut().for_each(|v| *v = elu(*v));
        }
    }
    x
}

fn push_row(dst: &mut Vec<f64>, src: &[f64], row: usize, d: usize) {
    dst.extend_from_slice(&src[row * d..(row + 1) * d]);
}

impl PolicyModel {
    /// Embeddings for the state described by `ctx`, reading propagation
    /// outputs from `cache`, which must have been prepared for `problem`.
    pub fn encode(
        &self,
        cache: &EmbeddingCache,
        problem: &SearchProblem<'_>,
        ctx: &StateContext,
        targets: &[NodeId],
    ) -> Result<Embeddings, ModelError> {
        let nq = problem.query.num_nodes();
        if !cache.is_ready()
            || cache.num_query != nq
            || cache.num_target != problem.target.num_nodes()
            || cache.layers.len() != self.config().layers
            || ctx.num_query_nodes() != nq
        {
            return Err(ModelError::StaleCache);
        }
        let d = self.config().dim;
        let nt = targets.len();
        let c = problem.candidates;

        // Links along M̃ with the cached-score slot when available.
        let mut eu = Vec::with_capacity(ctx.num_links());
        let mut ev = Vec::with_capacity(ctx.num_links());
        let mut slot = Vec::with_capacity(ctx.num_links());
        for u in 0..nq {
            for &v in ctx.forward(u) {
                eu.push(u);
                ev.push(v);
                slot.push(c.get(u).binary_search(&v).ok());
            }
        }
        let (mut tt, mut tu, mut tv, mut tslot) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut has_partner = vec![0.0; nt];
        for (t, &v) in targets.iter().enumerate() {
            for u in ctx.reverse(v) {
                tt.push(t);
                tu.push(u);
                tv.push(v);
                tslot.push(c.get(u).binary_search(&v).ok());
                has_partner[t] = 1.0;
            }
        }
        let flags_q = flag_rows((0..nq).map(|u| ctx.query_selected(u)));
        let flags_t = flag_rows(targets.iter().map(|&v| ctx.target_selected(v)));

        let mut acc_q: Vec<f64> = Vec::new();
        let mut acc_t: Vec<f64> = Vec::new();
        for (k, lc) in cache.layers.iter().enumerate() {
            let ids = &self.ids().layers[k];
            let score = |u: NodeId, v: NodeId, s: Option<usize>| match s {
                Some(i) => lc.scores[u][i],
                None => kernels::dot(&lc.q_key[u * d..(u + 1) * d], &lc.g_key[v * d..(v + 1) * d]),
            };

            let qs: Vec<f64> = (0..eu.len()).map(|e| score(eu[e], ev[e], slot[e])).collect();
            let w = kernels::segment_softmax(&qs, &eu);
            let mut msg = vec![0.0; nq * d];
            for e in 0..eu.len() {
                let (u, v) = (eu[e], ev[e]);
                for j in 0..d {
                    msg[u * d + j] += lc.g_val[v * d + j] * w[e];
                }
            }
            let width = 2 * d + FLAG_DIM;
            let mut x = Vec::with_capacity(nq * width);
            for u in 0..nq {
                push_row(&mut x, &msg, u, d);
                push_row(&mut x, &lc.q_h, u, d);
                push_row(&mut x, &flags_q, u, FLAG_DIM);
            }
            let hq = mlp(self, x, nq, &ids.comb_q);

            let ts: Vec<f64> = (0..tt.len()).map(|e| score(tu[e], tv[e], tslot[e])).collect();
            let w = kernels::segment_softmax(&ts, &tt);
            let mut msg = vec![0.0; nt * d];
            for e in 0..tt.len() {
                let (t, u) = (tt[e], tu[e]);
                for j in 0..d {
                    msg[t * d + j] += lc.q_val[u * d + j] * w[e];
                }
            }
            let mut x = Vec::new();
            for (t, &v) in targets.iter().enumerate() {
                push_row(&mut x, &msg, t, d);
                if self.config().query_readout {
                    x.extend(lc.readout.iter().map(|r| r * has_partner[t]));
                }
                push_row(&mut x, &lc.g_h, v, d);
                push_row(&mut x, &flags_t, t, FLAG_DIM);
            }
            let ht = mlp(self, x, nt, &ids.comb_g);

            if k == 0 {
                acc_q = hq;
                acc_t = ht;
            } else {
                acc_q.iter_mut().zip(&hq).for_each(|(a, b)| *a = a.max(*b));
                acc_t.iter_mut().zip(&ht).for_each(|(a, b)| *a = a.max(*b));
            }
        }
        let gamma = param_data(self, self.ids().norm_gamma);
        let beta = param_data(self, self.ids().norm_beta);
        let query = kernels::layer_norm_rows(&acc_q, nq, d, gamma, beta, LAYER_NORM_EPS).out;
        let target = kernels::layer_norm_rows(&acc_t, nt, d, gamma, beta, LAYER_NORM_EPS).out;
        let out = Embeddings {
            query: Tensor::matrix(nq, d, query)?,
            targets: targets.to_vec(),
            target: Tensor::matrix(nt, d, target)?,
            rows: targets.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
        };
        if !out.query.all_finite() || !out.target.all_finite() {
            return Err(crate::tensor::TensorError::NonFinite { op: "encode" }.into());
        }
        Ok(out)
    }

    /// Attention-weighted sum of query-node embeddings.
    pub fn state_embedding(&self, query: &Tensor) -> Result<Vec<f64>, ModelError> {
        let (n, d) = (query.rows(), query.cols());
        if n == 0 {
            return Err(ModelError::Config("state embedding needs at least one query node".into()));
        }
        let logits = mlp(self, query.data().to_vec(), n, &self.ids().att);
        let w = kernels::segment_softmax(&logits, &vec![0; n]);
        let mut out = vec![0.0; d];
        for (i, wi) in w.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(query.row(i)) {
                *o += x * wi;
            }
        }
        Ok(out)
    }

    /// Logits for `(u, target row)` pairs given the state embedding `hs`.
    pub fn pair_logits(&self, emb: &Embeddings, hs: &[f64], pairs: &[(NodeId, usize)]) -> Result<Vec<f64>, ModelError> {
        let d = self.config().dim;
        let f = self.config().bilinear;
        let p = pairs.len();
        let mut hu = Vec::with_capacity(p * d);
        let mut hv = Vec::with_capacity(p * d);
        for &(u, t) in pairs {
            if t >= emb.target.rows() {
                return Err(ModelError::MissingTarget(t));
            }
            hu.extend_from_slice(emb.query.row(u));
            hv.extend_from_slice(emb.target.row(t));
        }
        let bil = kernels::bilinear_rows(&hu, param_data(self, self.ids().bil), &hv, p, d, f);
        let mut x = Vec::with_capacity(p * (f + d));
        for i in 0..p {
            x.extend_from_slice(&bil[i * f..(i + 1) * f]);
            x.extend_from_slice(hs);
        }
        let out = mlp(self, x, p, &self.ids().pol);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(crate::tensor::TensorError::NonFinite { op: "pair_logits" }.into());
        }
        Ok(out)
    }

    /// One logit per action of query node `u`.
    pub fn policy_logits(&self, emb: &Embeddings, hs: &[f64], u: NodeId, actions: &[NodeId]) -> Result<Vec<f64>, ModelError> {
        if actions.is_empty() {
            return Err(ModelError::EmptyActions);
        }
        let pairs = actions
            .iter()
            .map(|&v| emb.target_row(v).map(|t| (u, t)).ok_or(ModelError::MissingTarget(v)))
            .collect::<Result<Vec<_>, _>>()?;
        self.pair_logits(emb, hs, &pairs)
    }
}
