use crate::graph::{ldp_features, EncodingVariant, LabeledGraph, NodeId};
use crate::tensor::{Tape, Tensor, Var};

use super::{Linear, ModelError, PolicyModel, StateContext, FEATURE_DIM, FLAG_DIM, LAYER_NORM_EPS};

/// Flat adjacency and flag-free initial features of one graph.
#[derive(Debug, Clone)]
pub struct GraphIndex {
    num_nodes: usize,
    nbr: Vec<NodeId>,
    owner: Vec<NodeId>,
    inv_deg: Vec<f64>,
    features: Tensor,
}

impl GraphIndex {
    pub fn new(g: &LabeledGraph, variant: EncodingVariant) -> Self {
        let n = g.num_nodes();
        let mut nbr = Vec::with_capacity(2 * g.num_edges());
        let mut owner = Vec::with_capacity(2 * g.num_edges());
        let mut inv_deg = Vec::with_capacity(n);
        let mut features = Vec::with_capacity(n * FEATURE_DIM);
        for u in g.nodes() {
            for &w in g.neighbors(u) {
                nbr.push(w);
                owner.push(u);
            }
            let d = g.degree(u);
            inv_deg.push(if d == 0 { 0.0 } else { 1.0 / d as f64 });
            match variant {
                EncodingVariant::Ldp => features.extend(ldp_features(g, u)),
                EncodingVariant::Constant => features.extend([1.0; FEATURE_DIM]),
            }
        }
        Self {
            num_nodes: n,
            nbr,
            owner,
            inv_deg,
            features: Tensor::matrix(n, FEATURE_DIM, features).expect("sized above"),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
}

/// Which projection pair a graph uses: query nodes produce attention keys
/// through `MLP_q` and values through `MLP_VAL,G`; target nodes through
/// `MLP_G` and `MLP_VAL,q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Query,
    Target,
}

/// State-independent outputs of one propagation layer.
#[derive(Debug, Clone, Copy)]
pub struct IntraVars {
    pub h: Var,
    pub key: Var,
    pub val: Var,
}

/// Final (post jumping-knowledge and layer-norm) embeddings for all query
/// nodes and the requested target rows.
#[derive(Debug, Clone, Copy)]
pub struct StateVars {
    pub query: Var,
    pub target: Var,
}

pub(crate) fn flag_rows(selected: impl Iterator<Item = bool>) -> Vec<f64> {
    selected
        .flat_map(|s| if s { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect()
}

impl PolicyModel {
    fn tape_linear(&self, tape: &mut Tape, x: Var, lin: Linear) -> Result<Var, ModelError> {
        let w = tape.param(self.params(), lin.w)?;
        let b = tape.param(self.params(), lin.b)?;
        let xw = tape.matmul(x, w)?;
        Ok(tape.add_row(xw, b)?)
    }

    /// Linear layers with ELU between them (not after the last).
    fn tape_mlp(&self, tape: &mut Tape, mut x: Var, layers: &[Linear]) -> Result<Var, ModelError> {
        for (i, &lin) in layers.iter().enumerate() {
            x = self.tape_linear(tape, x, lin)?;
            if i + 1 < layers.len() {
                x = tape.elu(x)?;
            }
        }
        Ok(x)
    }

    /// `ELU(W · [h_u ‖ mean_{u'∈N(u)} h_u'] + b)`; isolated nodes see a zero mean.
    pub fn intra_propagate(&self, tape: &mut Tape, layer: usize, g: &GraphIndex, h: Var) -> Result<Var, ModelError> {
        let width = tape.value(h).cols();
        let gathered = tape.gather_rows(h, &g.nbr)?;
        let summed = tape.scatter_add_rows(gathered, &g.owner, g.num_nodes)?;
        let mean = tape.mul_const_col(summed, g.inv_deg.clone())?;
        debug_assert_eq!(tape.value(mean).cols(), width);
        let cat = tape.concat_cols(&[h, mean])?;
        let lin = self.tape_linear(tape, cat, self.ids().layers[layer].sage)?;
        Ok(tape.elu(lin)?)
    }

    /// All `K` propagation layers with their attention projections.
    pub fn tape_intra(&self, tape: &mut Tape, g: &GraphIndex, role: Role) -> Result<Vec<IntraVars>, ModelError> {
        let mut h = tape.constant(g.features.clone())?;
        let mut out = Vec::with_capacity(self.config().layers);
        for k in 0..self.config().layers {
            h = self.intra_propagate(tape, k, g, h)?;
            let ids = &self.ids().layers[k];
            let (key_lin, val_lin) = match role {
                Role::Query => (ids.key_q, ids.val_g),
                Role::Target => (ids.key_g, ids.val_q),
            };
            let key = self.tape_linear(tape, h, key_lin)?;
            let key = tape.elu(key)?;
            let val = self.tape_linear(tape, h, val_lin)?;
            let val = tape.elu(val)?;
            out.push(IntraVars { h, key, val });
        }
        Ok(out)
    }

    /// Mean readout of the query's propagation output at every layer.
    pub fn tape_readouts(&self, tape: &mut Tape, q: &[IntraVars]) -> Result<Vec<Var>, ModelError> {
        q.iter().map(|l| Ok(tape.mean_rows(l.h)?)).collect()
    }

    /// One matching layer: attention messages along `M̃` and `M̃⁻¹`, then
    /// the combine MLPs. Returns query rows and rows for `targets`.
    #[allow(clippy::too_many_arguments)]
    pub fn inter_match_layer(
        &self,
        tape: &mut Tape,
        layer: usize,
        q: &IntraVars,
        readout: Var,
        g: &IntraVars,
        ctx: &StateContext,
        targets: &[NodeId],
    ) -> Result<(Var, Var), ModelError> {
        let ids = &self.ids().layers[layer];
        let nq = ctx.num_query_nodes();

        let (mut eu, mut ev) = (Vec::new(), Vec::new());
        for u in 0..nq {
            for &v in ctx.forward(u) {
                eu.push(u);
                ev.push(v);
            }
        }
        let kq = tape.gather_rows(q.key, &eu)?;
        let kg = tape.gather_rows(g.key, &ev)?;
        let score = tape.row_dot(kq, kg)?;
        let weight = tape.segment_softmax(score, &eu)?;
        let vals = tape.gather_rows(g.val, &ev)?;
        let weighted = tape.mul_col(vals, weight)?;
        let msg_q = tape.scatter_add_rows(weighted, &eu, nq)?;
        let flags_q = flag_rows((0..nq).map(|u| ctx.query_selected(u)));
        let flags_q = tape.constant(Tensor::matrix(nq, FLAG_DIM, flags_q)?)?;
        let in_q = tape.concat_cols(&[msg_q, q.h, flags_q])?;
        let hq = self.tape_mlp(tape, in_q, &ids.comb_q)?;

        let nt = targets.len();
        let (mut et, mut eu, mut ev) = (Vec::new(), Vec::new(), Vec::new());
        let mut has_partner = vec![0.0; nt];
        for (t, &v) in targets.iter().enumerate() {
            for u in ctx.reverse(v) {
                et.push(t);
                eu.push(u);
                ev.push(v);
                has_partner[t] = 1.0;
            }
        }
        let kq = tape.gather_rows(q.key, &eu)?;
        let kg = tape.gather_rows(g.key, &ev)?;
        let score = tape.row_dot(kq, kg)?;
        let weight = tape.segment_softmax(score, &et)?;
        let vals = tape.gather_rows(q.val, &eu)?;
        let weighted = tape.mul_col(vals, weight)?;
        let msg_t = tape.scatter_add_rows(weighted, &et, nt)?;
        let mut parts = vec![msg_t];
        if self.config().query_readout {
            let rb = tape.broadcast_rows(readout, nt)?;
            parts.push(tape.mul_const_col(rb, has_partner)?);
        }
        parts.push(tape.gather_rows(g.h, targets)?);
        let flags_t = flag_rows(targets.iter().map(|&v| ctx.target_selected(v)));
        parts.push(tape.constant(Tensor::matrix(nt, FLAG_DIM, flags_t)?)?);
        let in_t = tape.concat_cols(&parts)?;
        let ht = self.tape_mlp(tape, in_t, &ids.comb_g)?;
        Ok((hq, ht))
    }

    /// Stacked matching layers, element-wise MAX across layers, layer norm.
    pub fn tape_state(
        &self,
        tape: &mut Tape,
        q: &[IntraVars],
        readouts: &[Var],
        g: &[IntraVars],
        ctx: &StateContext,
        targets: &[NodeId],
    ) -> Result<StateVars, ModelError> {
        let mut acc: Option<(Var, Var)> = None;
        for k in 0..self.config().layers {
            let (hq, ht) = self.inter_match_layer(tape, k, &q[k], readouts[k], &g[k], ctx, targets)?;
            acc = Some(match acc {
                None => (hq, ht),
                Some((aq, at)) => (tape.max(aq, hq)?, tape.max(at, ht)?),
            });
        }
        let (aq, at) = acc.expect("at least one layer");
        let gamma = tape.param(self.params(), self.ids().norm_gamma)?;
        let beta = tape.param(self.params(), self.ids().norm_beta)?;
        Ok(StateVars {
            query: tape.layer_norm(aq, gamma, beta, LAYER_NORM_EPS)?,
            target: tape.layer_norm(at, gamma, beta, LAYER_NORM_EPS)?,
        })
    }

    /// `h_s = Σ_u softmax_u(MLP_att(h_u)) · h_u` as a `1×D` row.
    pub fn tape_state_embedding(&self, tape: &mut Tape, query: Var) -> Result<Var, ModelError> {
        let logits = self.tape_mlp(tape, query, &self.ids().att)?;
        let n = tape.value(query).rows();
        let weight = tape.segment_softmax(logits, &vec![0; n])?;
        let weighted = tape.mul_col(query, weight)?;
        Ok(tape.sum_rows(weighted)?)
    }

    /// `MLP([h_uᵀ W h_v ‖ h_s])` for each `(u, target row)` pair, as a `P×1` column.
    pub fn tape_pair_logits(
        &self,
        tape: &mut Tape,
        state: &StateVars,
        hs: Var,
        pairs: &[(NodeId, usize)],
    ) -> Result<Var, ModelError> {
        let us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let ts: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let hu = tape.gather_rows(state.query, &us)?;
        let hv = tape.gather_rows(state.target, &ts)?;
        let w = tape.param(self.params(), self.ids().bil)?;
        let bil = tape.bilinear(hu, w, hv)?;
        let hsb = tape.broadcast_rows(hs, pairs.len())?;
        let cat = tape.concat_cols(&[bil, hsb])?;
        self.tape_mlp(tape, cat, &self.ids().pol)
    }
}
