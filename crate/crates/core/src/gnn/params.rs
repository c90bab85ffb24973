//! Parameter storage, Glorot initialization, AdamW and gradient clipping.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffkernel::{Gradients, Tape, Var};
use crate::Result;

/// Named dense parameters. Layers refer to entries by index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    /// Uniform Glorot: `U(−a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> usize {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let w = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a));
        self.add(name, w)
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        self.add(name, Array2::zeros((rows, cols)))
    }

    pub fn ones(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        self.add(name, Array2::ones((rows, cols)))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Scalars in parameters whose name starts with `prefix`.
    pub fn scalar_count_with_prefix(&self, prefix: &str) -> usize {
        self.names
            .iter()
            .zip(&self.values)
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.len())
            .sum()
    }

    /// Registers every parameter on `tape`, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<Vec<Var>> {
        self.values
            .iter()
            .map(|v| {
                if trainable {
                    tape.param(v.clone())
                } else {
                    tape.constant(v.clone())
                }
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Gradients for each parameter in store order (zeros where unused).
pub fn collect_grads(store: &ParamStore, vars: &[Var], grads: &Gradients) -> Vec<Array2<f64>> {
    vars.iter()
        .zip(&store.values)
        .map(|(v, p)| grads.get_or_zeros(*v, (p.nrows(), p.ncols())))
        .collect()
}

pub fn global_norm(grads: &[Array2<f64>]) -> f64 {
    grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Array2<f64>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|x| x * k);
        }
    }
    norm
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Array2<f64>> = store.values.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &[Array2<f64>]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in store
            .values
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            p.mapv_inplace(|x| x * (1.0 - self.lr * self.weight_decay));
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            });
        }
    }
}
