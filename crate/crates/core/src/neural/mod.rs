//! Dense-network engine shared by the trainable heads.

mod checkpoint;
pub mod gradcheck;
mod net;
mod optim;

pub use checkpoint::{Checkpoint, NetSnapshot, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, compare_gradients, gradcheck_shape, GradCheckConfig, GradCheckReport};
pub use net::{
    argmax, decode_rating, expected_rating, softmax, stack, Activation, DecodeMode, DenseLayer, DenseNet, Gradients,
    LossGrad,
};
pub use optim::{train, train_with, LossTrace, OptimizerKind, Optimizer, TrainConfig};
pub(crate) use optim::epoch_batches;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;
