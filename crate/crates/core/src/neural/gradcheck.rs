//! Finite-difference verification of backpropagated gradients.
//!
//! Each checked coordinate is perturbed by `±epsilon` and the central
//! difference of the mean cross-entropy is compared with the analytic
//! gradient. The numerical side only ever calls the forward loss.
//!
//! A central difference is only an oracle where the loss is smooth on
//! `[x - epsilon, x + epsilon]`. Coordinates whose probe switches any relu
//! unit on or off are counted in `skipped_kinks` and not compared.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{DenseNet, LossGrad};
use super::{Activation, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Maximum accepted relative error per coordinate.
    pub tolerance: f64,
    /// Coordinates sampled from each weight matrix, bias vector and the
    /// input block; tensors smaller than this are checked exhaustively.
    pub samples_per_tensor: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            tolerance: 1e-4,
            samples_per_tensor: 24,
            batch_size: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coordinate {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, index: usize },
    Input { sample: usize, index: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinateCheck {
    pub coordinate: Coordinate,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub dims: Vec<usize>,
    pub seed: u64,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
    pub failures: Vec<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// `|a - n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn pick(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<usize> {
    if len <= k {
        (0..len).collect()
    } else {
        let mut v = sample(rng, len, k).into_vec();
        v.sort_unstable();
        v
    }
}

/// Checks parameter and input gradients of `net` on one batch.
pub fn check_gradients(
    net: &DenseNet<f64>,
    inputs: ArrayView2<f64>,
    labels: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = net.loss_and_grad(inputs, labels)?;
    compare_gradients(net, inputs, labels, &analytic, cfg)
}

/// Compares a supplied gradient against central differences of `net.loss`.
pub fn compare_gradients(
    net: &DenseNet<f64>,
    inputs: ArrayView2<f64>,
    labels: &[usize],
    analytic: &LossGrad<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let eps = cfg.epsilon;
    let (_, base_gates) = net.loss_with_gates(inputs, labels)?;
    let mut probe = net.clone();
    let mut checks = Vec::new();
    let mut skipped_kinks = 0;

    // None when the probe crosses a kink.
    let smooth_difference = |plus: (f64, Vec<bool>), minus: (f64, Vec<bool>)| -> Option<f64> {
        (plus.1 == base_gates && minus.1 == base_gates).then(|| (plus.0 - minus.0) / (2.0 * eps))
    };
    let central = |probe: &mut DenseNet<f64>, slot: &dyn Fn(&mut DenseNet<f64>) -> &mut f64| -> Result<Option<f64>> {
        let original = *slot(probe);
        *slot(probe) = original + eps;
        let plus = probe.loss_with_gates(inputs, labels);
        *slot(probe) = original - eps;
        let minus = probe.loss_with_gates(inputs, labels);
        *slot(probe) = original;
        Ok(smooth_difference(plus?, minus?))
    };
    let mut record = |coordinate: Coordinate, analytic: f64, numeric: Option<f64>| match numeric {
        Some(n) => checks.push((coordinate, analytic, n)),
        None => skipped_kinks += 1,
    };

    for layer in 0..net.layers().len() {
        let (rows, cols) = net.layers()[layer].weights.dim();
        for flat in pick(&mut rng, rows * cols, cfg.samples_per_tensor) {
            let (row, col) = (flat / cols, flat % cols);
            let numeric = central(&mut probe, &|p| &mut p.layers_mut()[layer].weights[[row, col]])?;
            record(Coordinate::Weight { layer, row, col }, analytic.grads.weights[layer][[row, col]], numeric);
        }
        let n_bias = net.layers()[layer].bias.len();
        for index in pick(&mut rng, n_bias, cfg.samples_per_tensor) {
            let numeric = central(&mut probe, &|p| &mut p.layers_mut()[layer].bias[index])?;
            record(Coordinate::Bias { layer, index }, analytic.grads.biases[layer][index], numeric);
        }
    }

    let (batch, width) = inputs.dim();
    let mut x = inputs.to_owned();
    for flat in pick(&mut rng, batch * width, cfg.samples_per_tensor) {
        let (sample, index) = (flat / width, flat % width);
        let original = x[[sample, index]];
        x[[sample, index]] = original + eps;
        let plus = net.loss_with_gates(x.view(), labels)?;
        x[[sample, index]] = original - eps;
        let minus = net.loss_with_gates(x.view(), labels)?;
        x[[sample, index]] = original;
        record(Coordinate::Input { sample, index }, analytic.input_grad[[sample, index]], smooth_difference(plus, minus));
    }

    let mut report = GradCheckReport {
        dims: net.dims(),
        seed: cfg.seed,
        checked: checks.len(),
        skipped_kinks,
        max_relative_error: 0.0,
        failures: Vec::new(),
    };
    for (coordinate, a, n) in checks {
        let rel = relative_error(a, n);
        report.max_relative_error = report.max_relative_error.max(rel);
        if !(rel < cfg.tolerance) {
            report.failures.push(CoordinateCheck {
                coordinate,
                analytic: a,
                numeric: n,
                relative_error: rel,
            });
        }
    }
    Ok(report)
}

/// Builds a seeded relu network of widths `dims` plus a random unit-scale
/// batch and checks its gradients.
pub fn gradcheck_shape(dims: &[usize], cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let net = DenseNet::<f64>::new(dims, Activation::Relu, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let width = dims[0];
    let scale = 1.0 / (width as f64).sqrt();
    let x = Array2::from_shape_simple_fn((cfg.batch_size, width), || rng.random_range(-1.0..1.0) * scale * 3f64.sqrt());
    let classes = *dims.last().expect("non-empty dims");
    let labels: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..classes)).collect();
    check_gradients(&net, x.view(), &labels, cfg)
}
