//! Versioned JSON checkpoints.
//!
//! Parameters are stored as `f64` regardless of the training scalar, which
//! round-trips `f32` exactly.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::net::{Activation, DenseLayer, DenseNet};
use super::{NeuralError, Result, TrainConfig};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSnapshot {
    pub layers: Vec<LayerSnapshot>,
}

impl NetSnapshot {
    pub fn capture<T: Scalar>(net: &DenseNet<T>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerSnapshot {
                in_dim: l.in_dim(),
                out_dim: l.out_dim(),
                activation: l.activation,
                weights: l.weights.iter().map(|v| v.as_f64()).collect(),
                bias: l.bias.iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        Self { layers }
    }

    pub fn restore<T: Scalar>(&self) -> Result<DenseNet<T>> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(NeuralError::Checkpoint(format!("layer {i} parameter count does not match its shape")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(NeuralError::Checkpoint(format!("layer {i} holds non-finite parameters")));
            }
            let weights = Array2::from_shape_vec((l.out_dim, l.in_dim), l.weights.iter().map(|&v| T::lit(v)).collect())
                .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
            let bias = Array1::from_iter(l.bias.iter().map(|&v| T::lit(v)));
            layers.push(DenseLayer {
                weights,
                bias,
                activation: l.activation,
            });
        }
        DenseNet::from_layers(layers)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.layers.first().map(|l| vec![l.in_dim]).unwrap_or_default();
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }
}

/// A model checkpoint: the dense head plus model-specific extras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<E> {
    pub version: u32,
    /// Model family, e.g. `"ncf"` or `"embed_head"`.
    pub kind: String,
    /// Scalar type used during training.
    pub scalar: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub net: NetSnapshot,
    pub extra: E,
}

impl<E: Serialize + DeserializeOwned> Checkpoint<E> {
    pub fn new<T: Scalar>(kind: &str, net: &DenseNet<T>, config: &TrainConfig, extra: E) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            scalar: T::NAME.to_string(),
            seed: config.seed,
            config: config.clone(),
            net: NetSnapshot::capture(net),
            extra,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, kind: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        if cp.kind != kind {
            return Err(NeuralError::Checkpoint(format!("expected a {kind} checkpoint, found {}", cp.kind)));
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip_is_exact() {
        let net = DenseNet::<f32>::new(&[4, 6, 5], Activation::Relu, 11).unwrap();
        let cp = Checkpoint::new("test", &net, &TrainConfig::default(), ());
        let back = Checkpoint::<()>::from_json(&cp.to_json(), "test").unwrap();
        assert_eq!(back.scalar, "f32");
        assert_eq!(back.net.restore::<f32>().unwrap(), net);
        assert_eq!(back.net.dims(), vec![4, 6, 5]);
    }

    #[test]
    fn rejects_wrong_kind_and_version() {
        let net = DenseNet::<f64>::new(&[2, 5], Activation::Relu, 0).unwrap();
        let mut cp = Checkpoint::new("ncf", &net, &TrainConfig::default(), ());
        assert!(Checkpoint::<()>::from_json(&cp.to_json(), "embed_head").is_err());
        cp.version = 99;
        assert!(Checkpoint::<()>::from_json(&cp.to_json(), "ncf").is_err());
    }

    #[test]
    fn rejects_truncated_parameters() {
        let net = DenseNet::<f64>::new(&[2, 3, 5], Activation::Relu, 0).unwrap();
        let mut snap = NetSnapshot::capture(&net);
        snap.layers[1].weights.pop();
        assert!(snap.restore::<f64>().is_err());
    }
}
