use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};
use super::{NeuralError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Decoupled weight decay coefficient.
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NeuralError::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NeuralError::Config("batch size must be at least 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(NeuralError::Config(format!("l2 {} must be >= 0", self.l2)));
        }
        Ok(())
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Moments<T> {
    steps: i32,
    first: Vec<T>,
    second: Vec<T>,
}

/// First-order optimizer over independently keyed parameter groups.
///
/// Adam keeps per-group moments and step counts, so groups updated only
/// occasionally (rows of an embedding table) get correct bias correction.
/// Weight decay shrinks parameters by `max(0, 1 - lr * l2)` before the
/// gradient step and is applied only to groups being stepped.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    learning_rate: f64,
    l2: f64,
    state: HashMap<u64, Moments<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            kind: cfg.optimizer,
            learning_rate: cfg.learning_rate,
            l2: cfg.l2,
            state: HashMap::new(),
        }
    }

    pub fn step(&mut self, group: u64, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), grads.len());
        if self.l2 > 0.0 {
            let keep = T::lit((1.0 - self.learning_rate * self.l2).max(0.0));
            params.iter_mut().for_each(|p| *p = *p * keep);
        }
        let lr = T::lit(self.learning_rate);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p = *p - lr * g;
                }
            }
            OptimizerKind::Adam => {
                let m = self.state.entry(group).or_insert_with(|| Moments {
                    steps: 0,
                    first: vec![T::zero(); params.len()],
                    second: vec![T::zero(); params.len()],
                });
                m.steps += 1;
                let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
                let c1 = T::lit(1.0 - BETA1.powi(m.steps));
                let c2 = T::lit(1.0 - BETA2.powi(m.steps));
                let eps = T::lit(EPSILON);
                for i in 0..params.len() {
                    let g = grads[i];
                    m.first[i] = b1 * m.first[i] + (T::one() - b1) * g;
                    m.second[i] = b2 * m.second[i] + (T::one() - b2) * g * g;
                    let m_hat = m.first[i] / c1;
                    let v_hat = m.second[i] / c2;
                    params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }

    /// Steps every layer of `net`. Groups `base + 2l` and `base + 2l + 1`
    /// hold layer `l`'s weights and bias.
    pub fn step_net(&mut self, base: u64, net: &mut DenseNet<T>, grads: &Gradients<T>) {
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let w = layer.weights.as_slice_mut().expect("standard layout weights");
            self.step(base + 2 * l as u64, w, grads.weights[l].as_slice().expect("standard layout grads"));
            let b = layer.bias.as_slice_mut().expect("contiguous bias");
            self.step(base + 2 * l as u64 + 1, b, grads.biases[l].as_slice().expect("contiguous grads"));
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub epoch_loss: Vec<f64>,
}

/// Deterministic epoch order: the same seed always yields the same batches.
pub(crate) fn epoch_batches(rng: &mut ChaCha8Rng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Minibatch training with cross-entropy. `on_epoch` sees the network after
/// each epoch together with that epoch's mean loss.
pub fn train_with<T: Scalar>(
    mut net: DenseNet<T>,
    inputs: &Array2<T>,
    labels: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &DenseNet<T>, f64),
) -> Result<(DenseNet<T>, LossTrace)> {
    cfg.validate()?;
    if inputs.nrows() == 0 {
        return Err(NeuralError::Config("training data is empty".into()));
    }
    if labels.len() != inputs.nrows() {
        return Err(NeuralError::Shape(format!("{} inputs but {} labels", inputs.nrows(), labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = Optimizer::new(cfg);
    let mut trace = LossTrace::default();

    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(&mut rng, inputs.nrows(), cfg.batch_size) {
            let x = inputs.select(Axis(0), &batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let lg = net.loss_and_grad(x.view(), &y)?;
            let loss = lg.loss.as_f64();
            if !loss.is_finite() {
                return Err(NeuralError::Diverged { epoch });
            }
            total += loss * batch.len() as f64;
            optimizer.step_net(0, &mut net, &lg.grads);
        }
        if !net.all_finite() {
            return Err(NeuralError::Diverged { epoch });
        }
        let mean = total / inputs.nrows() as f64;
        trace.epoch_loss.push(mean);
        on_epoch(epoch, &net, mean);
    }
    Ok((net, trace))
}

/// Trains on `(input, label)` pairs.
pub fn train<T: Scalar>(
    net: DenseNet<T>,
    data: &[(Vec<T>, usize)],
    cfg: &TrainConfig,
) -> Result<(DenseNet<T>, LossTrace)> {
    if data.is_empty() {
        return Err(NeuralError::Config("training data is empty".into()));
    }
    let (x, y) = super::net::stack(data, net.input_dim())?;
    train_with(net, &x, &y, cfg, |_, _, _| {})
}
