use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NeuralError, Result};
use crate::corpus::{Rating, NUM_RATINGS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Identity => z,
        }
    }
}

/// One affine layer `y = act(W x + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
            activation,
        }
    }

    /// Weights uniform in `±1/sqrt(in_dim)`, zero bias.
    pub fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((out_dim, in_dim), || T::lit(rng.random_range(-bound..bound)));
        Self {
            weights,
            bias: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn forward(&self, input: ArrayView2<T>) -> Array2<T> {
        let mut z = input.dot(&self.weights.t());
        z += &self.bias;
        if self.activation != Activation::Identity {
            z.mapv_inplace(|v| self.activation.apply(v));
        }
        z
    }
}

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T> {
    layers: Vec<DenseLayer<T>>,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        let w: f64 = self.weights.iter().flat_map(|w| w.iter()).map(|v| v.as_f64().powi(2)).sum();
        let b: f64 = self.biases.iter().flat_map(|b| b.iter()).map(|v| v.as_f64().powi(2)).sum();
        (w + b).sqrt()
    }
}

/// Result of a loss evaluation with backpropagation.
#[derive(Debug, Clone)]
pub struct LossGrad<T> {
    /// Mean cross-entropy over the batch.
    pub loss: T,
    pub grads: Gradients<T>,
    /// d loss / d input, one row per sample.
    pub input_grad: Array2<T>,
}

impl<T: Scalar> DenseNet<T> {
    /// Builds a seeded network with layer widths `dims` (input first).
    /// Hidden layers use `hidden`; the last layer is identity.
    pub fn new(dims: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NeuralError::Shape(format!("invalid layer widths {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { hidden };
                DenseLayer::init(w[0], w[1], act, &mut rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NeuralError::Shape("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(NeuralError::Shape(format!(
                    "layer {i}: bias length {} does not match output width {}",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(NeuralError::Shape(format!("layer {i} has a zero dimension")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NeuralError::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    /// Mutable access for tests and initialization schemes; shapes must not change.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn parameter_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .map(|v| v.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(NeuralError::Shape(format!(
                "input has {cols} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a `batch x input_dim` matrix.
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut current = self.layers[0].forward(x);
        check_finite(&current, 0)?;
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            current = layer.forward(current.view());
            check_finite(&current, i)?;
        }
        Ok(current)
    }

    fn activations(&self, x: ArrayView2<T>) -> Result<Vec<Array2<T>>> {
        self.check_input(x.ncols())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(acts[i].view());
            check_finite(&next, i)?;
            acts.push(next);
        }
        Ok(acts)
    }

    fn check_labels(&self, rows: usize, labels: &[usize]) -> Result<()> {
        if labels.len() != rows {
            return Err(NeuralError::Shape(format!("{rows} inputs but {} labels", labels.len())));
        }
        if rows == 0 {
            return Err(NeuralError::Shape("empty batch".into()));
        }
        let k = self.output_dim();
        if let Some(bad) = labels.iter().find(|&&y| y >= k) {
            return Err(NeuralError::Label { label: *bad, classes: k });
        }
        Ok(())
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, x: ArrayView2<T>, labels: &[usize]) -> Result<T> {
        self.check_labels(x.nrows(), labels)?;
        let logits = self.forward_batch(x)?;
        Ok(cross_entropy(&logits, labels).0)
    }

    /// Mean cross-entropy plus the on/off state of every relu unit in the batch.
    pub(crate) fn loss_with_gates(&self, x: ArrayView2<T>, labels: &[usize]) -> Result<(T, Vec<bool>)> {
        self.check_labels(x.nrows(), labels)?;
        let acts = self.activations(x)?;
        let mut gates = Vec::new();
        for (layer, out) in self.layers.iter().zip(&acts[1..]) {
            if layer.activation == Activation::Relu {
                gates.extend(out.iter().map(|&v| v > T::zero()));
            }
        }
        Ok((cross_entropy(&acts[acts.len() - 1], labels).0, gates))
    }

    /// Mean cross-entropy over the batch and its gradients by backpropagation.
    pub fn loss_and_grad(&self, x: ArrayView2<T>, labels: &[usize]) -> Result<LossGrad<T>> {
        self.check_labels(x.nrows(), labels)?;
        let acts = self.activations(x)?;
        let logits = acts.last().expect("output activation");
        let (loss, mut delta) = cross_entropy(logits, labels);

        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut input_grad = None;
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let a_prev = &acts[l];
            weights.push(delta.t().dot(a_prev));
            biases.push(delta.sum_axis(Axis(0)));
            let mut d_prev = delta.dot(&layer.weights);
            if l == 0 {
                input_grad = Some(d_prev);
                break;
            }
            if self.layers[l - 1].activation == Activation::Relu {
                ndarray::Zip::from(&mut d_prev).and(&acts[l]).for_each(|d, &a| {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                });
            }
            delta = d_prev;
        }
        weights.reverse();
        biases.reverse();
        Ok(LossGrad {
            loss,
            grads: Gradients { weights, biases },
            input_grad: input_grad.expect("layer 0 visited"),
        })
    }

    /// Convenience wrapper taking `(input, label)` pairs.
    pub fn loss_and_grad_samples(&self, batch: &[(Vec<T>, usize)]) -> Result<LossGrad<T>> {
        let (x, labels) = stack(batch, self.input_dim())?;
        self.loss_and_grad(x.view(), &labels)
    }
}

/// Stacks `(input, label)` pairs into a matrix and a label vector.
pub fn stack<T: Scalar>(batch: &[(Vec<T>, usize)], dim: usize) -> Result<(Array2<T>, Vec<usize>)> {
    let mut x = Array2::zeros((batch.len(), dim));
    for (i, (row, _)) in batch.iter().enumerate() {
        if row.len() != dim {
            return Err(NeuralError::Shape(format!("sample {i} has {} features, expected {dim}", row.len())));
        }
        x.slice_mut(s![i, ..]).assign(&ndarray::ArrayView1::from(row.as_slice()));
    }
    Ok((x, batch.iter().map(|(_, y)| *y).collect()))
}

fn check_finite<T: Scalar>(a: &Array2<T>, layer: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NeuralError::NonFinite { layer })
    }
}

/// Mean cross-entropy and its gradient w.r.t. the logits.
fn cross_entropy<T: Scalar>(logits: &Array2<T>, labels: &[usize]) -> (T, Array2<T>) {
    let batch = T::lit(labels.len() as f64);
    let mut grad = logits.clone();
    let mut total = T::zero();
    for (mut row, &y) in grad.rows_mut().into_iter().zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum = row.iter().map(|&z| (z - max).exp()).fold(T::zero(), |a, b| a + b);
        let lse = max + sum.ln();
        total = total + (lse - row[y]);
        row.mapv_inplace(|z| (z - lse).exp() / batch);
        row[y] = row[y] - T::one() / batch;
    }
    (total / batch, grad)
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// How a 5-way output becomes a rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Most likely class, lowest rating on ties.
    #[default]
    Argmax,
    /// `round(sum_i i * softmax_i)`.
    ExpectedValue,
}

/// Expected rating under a probability vector over `0..=4`.
pub fn expected_rating(probs: &[f64]) -> f64 {
    probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
}

pub fn decode_rating<T: Scalar>(logits: &[T], mode: DecodeMode) -> Result<Rating> {
    if logits.len() != NUM_RATINGS {
        return Err(NeuralError::Shape(format!(
            "rating decode needs {NUM_RATINGS} logits, got {}",
            logits.len()
        )));
    }
    let index = match mode {
        DecodeMode::Argmax => argmax(logits),
        DecodeMode::ExpectedValue => {
            let probs: Vec<f64> = softmax(logits).into_iter().map(Scalar::as_f64).collect();
            expected_rating(&probs).round().clamp(0.0, (NUM_RATINGS - 1) as f64) as usize
        }
    };
    Ok(Rating::from_index(index))
}
