use std::collections::HashMap;
use std::sync::Arc;

use crate::graph::synth::preferential_attachment;
use crate::graph::{random_walk_sample, LabeledGraph, NodeId};
use crate::model::{EncoderConfig, GraphIndex, IntraVars, ModelError, PolicyModel, Role, StateContext};
use crate::search::FilterMode;
use crate::tensor::{finite_difference_check, GradCheckReport, ParamStore, Tape, Tensor, TensorError, Var};

use super::{collect_training_signals, sample_negatives, truth_path_tree, Episode, TrainError, TrainingSample};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Loss terms of one sample or one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub la: Var,
    pub mm: Var,
    pub total: Var,
    /// Pairs skipped because they were not in `M̃` at the sample's state.
    pub excluded: usize,
}

fn zero(tape: &mut Tape) -> Result<Var, ModelError> {
    Ok(tape.constant(Tensor::zeros(&[1, 1]))?)
}

fn sum_selected(tape: &mut Tape, col: Var, rows: &[usize]) -> Result<Option<Var>, ModelError> {
    if rows.is_empty() {
        return Ok(None);
    }
    let picked = tape.gather_rows(col, rows)?;
    Ok(Some(tape.sum_all(picked)?))
}

/// `−Σ_pos log π − Σ_neg log(1 − π)` with `π = clamp(σ(logit))`, from a
/// `P×1` logit column and per-row labels.
pub fn look_ahead_from_logits(tape: &mut Tape, logits: Var, positive: &[bool]) -> Result<Var, ModelError> {
    let pos: Vec<usize> = (0..positive.len()).filter(|&i| positive[i]).collect();
    let neg: Vec<usize> = (0..positive.len()).filter(|&i| !positive[i]).collect();
    let p = tape.sigmoid(logits)?;
    let p = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let mut total = zero(tape)?;
    if !pos.is_empty() {
        let lp = tape.log(p)?;
        let s = sum_selected(tape, lp, &pos)?.expect("nonempty");
        total = tape.sub(total, s)?;
    }
    if !neg.is_empty() {
        let q = tape.scale(p, -1.0)?;
        let q = tape.add_const(q, 1.0)?;
        let lq = tape.log(q)?;
        let s = sum_selected(tape, lq, &neg)?.expect("nonempty");
        total = tape.sub(total, s)?;
    }
    Ok(total)
}

/// `Σ_pos E + Σ_neg max(0, α − E)` with `E = ‖max(0, h_u − h_v)‖²` per row.
pub fn max_margin_from_embeddings(
    tape: &mut Tape,
    hu: Var,
    hv: Var,
    positive: &[bool],
    margin: f64,
) -> Result<Var, ModelError> {
    let pos: Vec<usize> = (0..positive.len()).filter(|&i| positive[i]).collect();
    let neg: Vec<usize> = (0..positive.len()).filter(|&i| !positive[i]).collect();
    let diff = tape.sub(hu, hv)?;
    let r = tape.relu(diff)?;
    let e = tape.row_dot(r, r)?;
    let mut total = zero(tape)?;
    if let Some(s) = sum_selected(tape, e, &pos)? {
        total = tape.add(total, s)?;
    }
    if !neg.is_empty() {
        let en = tape.gather_rows(e, &neg)?;
        let slack = tape.scale(en, -1.0)?;
        let slack = tape.add_const(slack, margin)?;
        let hinge = tape.relu(slack)?;
        let s = tape.sum_all(hinge)?;
        total = tape.add(total, s)?;
    }
    Ok(total)
}

struct QueryVars {
    layers: Vec<IntraVars>,
    readouts: Vec<Var>,
}

/// Builds losses for many samples on one tape, sharing the propagation
/// layers of every distinct target and query graph.
pub struct BatchLoss<'m> {
    model: &'m PolicyModel,
    margin: f64,
    targets: HashMap<*const LabeledGraph, Vec<IntraVars>>,
    queries: HashMap<*const Episode, QueryVars>,
    // keeps the keyed episodes alive for the lifetime of the tape
    episodes: Vec<Arc<Episode>>,
}

impl<'m> BatchLoss<'m> {
    pub fn new(model: &'m PolicyModel, margin: f64) -> Self {
        Self {
            model,
            margin,
            targets: HashMap::new(),
            queries: HashMap::new(),
            episodes: Vec::new(),
        }
    }

    fn ensure_graphs(&mut self, tape: &mut Tape, ep: &Arc<Episode>) -> Result<(), ModelError> {
        let variant = self.model.config().encoding;
        let tkey = Arc::as_ptr(&ep.target);
        if !self.targets.contains_key(&tkey) {
            let index = GraphIndex::new(&ep.target, variant);
            let layers = self.model.tape_intra(tape, &index, Role::Target)?;
            self.targets.insert(tkey, layers);
        }
        let qkey = Arc::as_ptr(ep);
        if !self.queries.contains_key(&qkey) {
            let index = GraphIndex::new(&ep.query, variant);
            let layers = self.model.tape_intra(tape, &index, Role::Query)?;
            let readouts = self.model.tape_readouts(tape, &layers)?;
            self.queries.insert(qkey, QueryVars { layers, readouts });
            self.episodes.push(Arc::clone(ep));
        }
        Ok(())
    }

    /// `L_la`, `L_mm` and their sum for one sample, all evaluated at the
    /// sample's own state.
    pub fn sample_loss(&mut self, tape: &mut Tape, sample: &TrainingSample) -> Result<LossVars, ModelError> {
        let ep = &sample.episode;
        self.ensure_graphs(tape, ep)?;
        let problem = ep.problem();
        let ctx = StateContext::build(&problem, &sample.assignment);

        let mut pairs: Vec<(NodeId, NodeId, bool)> = Vec::with_capacity(sample.num_pairs());
        let mut excluded = 0;
        let listed = sample
            .positives
            .iter()
            .map(|p| (p.u, p.v, true))
            .chain(sample.negatives.iter().map(|&(u, v)| (u, v, false)));
        for (u, v, pos) in listed {
            if ctx.links(u, v) && !ctx.query_selected(u) {
                pairs.push((u, v, pos));
            } else {
                excluded += 1;
            }
        }
        if pairs.is_empty() {
            let z = zero(tape)?;
            return Ok(LossVars { la: z, mm: z, total: z, excluded });
        }

        let mut targets: Vec<NodeId> = pairs.iter().map(|p| p.1).collect();
        targets.sort_unstable();
        targets.dedup();
        let rows: Vec<(NodeId, usize)> = pairs
            .iter()
            .map(|&(u, v, _)| (u, targets.binary_search(&v).expect("collected above")))
            .collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();

        let q = &self.queries[&Arc::as_ptr(ep)];
        let g = &self.targets[&Arc::as_ptr(&ep.target)];
        let state = self.model.tape_state(tape, &q.layers, &q.readouts, g, &ctx, &targets)?;
        let hs = self.model.tape_state_embedding(tape, state.query)?;
        let logits = self.model.tape_pair_logits(tape, &state, hs, &rows)?;
        let la = look_ahead_from_logits(tape, logits, &labels)?;

        let us: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let ts: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let hu = tape.gather_rows(state.query, &us)?;
        let hv = tape.gather_rows(state.target, &ts)?;
        let mm = max_margin_from_embeddings(tape, hu, hv, &labels, self.margin)?;
        let total = tape.add(la, mm)?;
        Ok(LossVars { la, mm, total, excluded })
    }

    /// Mean of the per-sample losses.
    pub fn batch_loss(&mut self, tape: &mut Tape, samples: &[&TrainingSample]) -> Result<LossVars, ModelError> {
        let mut acc: Option<LossVars> = None;
        for s in samples {
            let l = self.sample_loss(tape, s)?;
            acc = Some(match acc {
                None => l,
                Some(a) => LossVars {
                    la: tape.add(a.la, l.la)?,
                    mm: tape.add(a.mm, l.mm)?,
                    total: tape.add(a.total, l.total)?,
                    excluded: a.excluded + l.excluded,
                },
            });
        }
        let Some(a) = acc else {
            let z = zero(tape)?;
            return Ok(LossVars { la: z, mm: z, total: z, excluded: 0 });
        };
        let k = 1.0 / samples.len() as f64;
        Ok(LossVars {
            la: tape.scale(a.la, k)?,
            mm: tape.scale(a.mm, k)?,
            total: tape.scale(a.total, k)?,
            excluded: a.excluded,
        })
    }
}

/// `L_total = L_la + L_mm` for one sample on a fresh tape.
pub fn total_loss(
    model: &PolicyModel,
    sample: &TrainingSample,
    margin: f64,
    tape: &mut Tape,
) -> Result<LossVars, ModelError> {
    BatchLoss::new(model, margin).sample_loss(tape, sample)
}

fn as_tensor_error(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => TensorError::Shape {
            op: "model",
            detail: other.to_string(),
        },
    }
}

/// Finite-difference check of `L_total` for one sample over `coordinates`
/// randomly chosen parameter entries.
pub fn total_loss_gradient_check(
    model: &PolicyModel,
    sample: &TrainingSample,
    margin: f64,
    h: f64,
    coordinates: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let config = model.config().clone();
    let mut params = model.params().clone();
    let build = |tape: &mut Tape, p: &ParamStore| -> Result<Var, TensorError> {
        let m = PolicyModel::from_params(config.clone(), p.clone()).map_err(as_tensor_error)?;
        let l = total_loss(&m, sample, margin, tape).map_err(as_tensor_error)?;
        Ok(l.total)
    };
    Ok(finite_difference_check(&mut params, build, h, coordinates, seed)?)
}

/// A small seeded model and mid-path sample with both loss terms active,
/// sized for gradient checks.
pub fn gradcheck_fixture(seed: u64, config: EncoderConfig) -> Result<(PolicyModel, TrainingSample), TrainError> {
    let target = Arc::new(preferential_attachment(40, 2, 3, seed));
    let sampled = random_walk_sample(&target, 6, 1.0, seed)?;
    let episode = Arc::new(Episode::new(sampled.query, target, FilterMode::LdfNlf)?);
    let samples = collect_training_signals(&episode, &truth_path_tree(&episode, &sampled.truth_mapping));
    let mid = samples.len() / 2;
    let mut sample = samples
        .into_iter()
        .nth(mid)
        .ok_or_else(|| TrainError::Config("truth path produced no samples".into()))?;
    let actions = sample.actions();
    sample.negatives = sample_negatives(&sample, &actions, seed);
    Ok((PolicyModel::new(config, seed)?, sample))
}
