use crate::tensor::{ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling applied before each update.
    pub clip_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 0.01,
            weight_decay: 0.01,
            clip_norm: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    skipped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// `grad_norm` is the norm before clipping.
    Applied { grad_norm: f64 },
    /// A gradient entry was not finite; nothing changed.
    Skipped,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, config: AdamWConfig) -> Self {
        let zeros = || params.ids().map(|id| Tensor::zeros(params.value(id).shape())).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            step: 0,
            skipped: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn first_moment(&self, id: usize) -> &Tensor {
        &self.m[id]
    }

    pub fn second_moment(&self, id: usize) -> &Tensor {
        &self.v[id]
    }
}

/// Scales all gradients so their global norm is at most `max_norm`;
/// returns the norm before scaling.
pub fn clip_grad_norm(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm {
        let k = max_norm / norm;
        for id in params.ids() {
            params.grad_mut(id).data_mut().iter_mut().for_each(|g| *g *= k);
        }
    }
    norm
}

/// One AdamW update from the gradients stored in `params`: clip, decoupled
/// decay `p ← p·(1 − lr·wd)`, then the bias-corrected Adam step.
pub fn adamw_step(params: &mut ParamStore, opt: &mut OptimizerState) -> StepOutcome {
    assert_eq!(params.len(), opt.m.len(), "optimizer state belongs to another store");
    let finite = params.ids().all(|id| params.grad(id).all_finite());
    if !finite {
        opt.skipped += 1;
        return StepOutcome::Skipped;
    }
    let c = opt.config;
    let grad_norm = clip_grad_norm(params, c.clip_norm);
    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let decay = 1.0 - c.lr * c.weight_decay;
    for id in params.ids() {
        let g = params.grad(id).data().to_vec();
        let m = opt.m[id].data_mut();
        let v = opt.v[id].data_mut();
        let p = params.value_mut(id).data_mut();
        for i in 0..p.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] = p[i] * decay - c.lr * mhat / (vhat.sqrt() + c.eps);
        }
    }
    StepOutcome::Applied { grad_norm }
}
