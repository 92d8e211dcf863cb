use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tensor, TensorError};

pub type ParamId = usize;

/// Named learnable tensors with paired gradient accumulators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic initial value for parameter `name`.
///
/// Names ending in `.b` or `.beta` start at zero, `.gamma` at one; every other
/// tensor is drawn from `uniform(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn param_init(name: &str, shape: &[usize], seed: u64) -> Tensor {
    if name.ends_with(".b") || name.ends_with(".beta") {
        return Tensor::zeros(shape);
    }
    if name.ends_with(".gamma") {
        return Tensor::filled(shape, 1.0);
    }
    let (fan_in, fan_out) = match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [.., a, b] => (*a, *b),
    };
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(name.as_bytes()) ^ seed.rotate_left(17));
    let data = (0..shape.iter().product::<usize>())
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("sized from shape")
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if self.index.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let id = self.values.len();
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Registers a freshly initialized parameter.
    pub fn init(&mut self, name: &str, shape: &[usize], seed: u64) -> Result<ParamId, TensorError> {
        self.insert(name, param_init(name, shape, seed))
    }

    pub fn id(&self, name: &str) -> Result<ParamId, TensorError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id]
    }

    pub fn ids(&self) -> std::ops::Range<ParamId> {
        0..self.values.len()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Global L2 norm over every gradient.
    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
    }

    /// Copies values (not gradients) from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<(), TensorError> {
        if self.names != other.names {
            return Err(shape_mismatch("copy_values_from"));
        }
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            if dst.shape() != src.shape() {
                return Err(shape_mismatch("copy_values_from"));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// True when names, shapes, and every value bit agree.
    pub fn bitwise_eq(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

fn shape_mismatch(op: &'static str) -> TensorError {
    super::shape_err(op, "parameter layouts differ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biases_start_at_zero() {
        assert!(param_init("layer0.sage.b", &[1, 16], 3).data().iter().all(|&x| x == 0.0));
        assert!(param_init("norm.gamma", &[1, 4], 3).data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn init_is_deterministic_per_name_and_seed() {
        let a = param_init("w", &[8, 8], 1);
        assert_eq!(a, param_init("w", &[8, 8], 1));
        assert_ne!(a, param_init("w", &[8, 8], 2));
        assert_ne!(a, param_init("v", &[8, 8], 1));
    }

    #[test]
    fn init_spread_matches_uniform_bound() {
        let t = param_init("big.w", &[128, 128], 11);
        let bound = (6.0f64 / 256.0).sqrt();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let std = (t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = bound / 3f64.sqrt();
        assert!((std - expected).abs() < 0.2 * expected, "std {std} vs {expected}");
        assert!(t.data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.init("w", &[2, 2], 0).unwrap();
        assert_eq!(store.init("w", &[2, 2], 0), Err(TensorError::DuplicateParam("w".into())));
        assert!(store.id("nope").is_err());
    }
}
