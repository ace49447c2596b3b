use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Param {
    value: Tensor,
    grad: Option<Tensor>,
    m: Tensor,
    v: Tensor,
}

/// Named parameters with their gradients and Adam moments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One parameter in a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Flat `name → {shape, values}` map.
pub type Checkpoint = BTreeMap<String, CheckpointEntry>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let [r, c] = value.shape();
        self.params.insert(
            name.into(),
            Param {
                value,
                grad: None,
                m: Tensor::zeros(r, c),
                v: Tensor::zeros(r, c),
            },
        );
    }

    /// Glorot-uniform initialization.
    pub fn init_glorot<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) {
        let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        self.insert(name, Tensor::new(rows, cols, data).expect("sized"));
    }

    pub fn init_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) {
        self.insert(name, Tensor::zeros(rows, cols));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|p| p.grad.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn n_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Sets every gradient to zeros of the parameter's shape.
    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            let [r, c] = p.value.shape();
            p.grad = Some(Tensor::zeros(r, c));
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        if p.value.shape() != g.shape() {
            return Err(Error::shape(
                "accumulate_grad",
                format!("{name}: {:?} vs {:?}", p.value.shape(), g.shape()),
            ));
        }
        match &mut p.grad {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their joint L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for g in self.params.values_mut().filter_map(|p| p.grad.as_mut()) {
                g.data_mut().iter_mut().for_each(|v| *v *= k);
            }
        }
        norm
    }

    /// Bias-corrected Adam update; consumes the gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if let Some((name, _)) = self.params.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(Error::invalid(format!("parameter {name} has no gradient")));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for p in self.params.values_mut() {
            let g = p.grad.take().expect("checked above");
            let (m, v, w) = (p.m.data_mut(), p.v.data_mut(), p.value.data_mut());
            for i in 0..g.len() {
                let gi = g.data()[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                w[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.params
            .iter()
            .map(|(k, p)| {
                (
                    k.clone(),
                    CheckpointEntry {
                        shape: p.value.shape(),
                        values: p.value.data().to_vec(),
                    },
                )
            })
            .collect()
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut store = Self::new();
        for (name, e) in ck {
            let t = Tensor::new(e.shape[0], e.shape[1], e.values.clone())
                .map_err(|_| Error::invalid(format!("checkpoint entry {name} has wrong value count")))?;
            store.insert(name.clone(), t);
        }
        Ok(store)
    }
}
