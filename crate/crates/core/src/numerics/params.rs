use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::rng::Rng;

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Glorot uniform over the first and last axes.
    Xavier,
    Uniform(f64),
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    /// Adds a parameter drawn from the stream derived from `name`, so adding or
    /// removing unrelated parameters never changes this one.
    pub fn init(&mut self, rng: &Rng, name: &str, shape: &[usize], init: Init) {
        let n: usize = shape.iter().product();
        let mut r = rng.split(name_hash(name));
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Xavier => {
                let fan_out = *shape.last().unwrap();
                let fan_in = n / fan_out;
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| r.range(-a, a)).collect()
            }
            Init::Uniform(a) => (0..n).map(|_| r.range(-a, a)).collect(),
        };
        self.insert(name, Tensor::new(shape, data).expect("shape matches data"));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors.values_mut() {
            t.grad = None;
        }
    }

    /// Rescales all gradients so their joint L2 norm is at most `max_norm`;
    /// returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm("");
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for g in self.tensors.values_mut().filter_map(|t| t.grad.as_mut()) {
                g.iter_mut().for_each(|x| *x *= k);
            }
        }
        norm
    }

    /// L2 norm of the gradients of parameters whose name starts with `prefix`.
    pub fn grad_norm(&self, prefix: &str) -> f64 {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .filter_map(|(_, t)| t.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// FNV-1a; stable across platforms and releases.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
