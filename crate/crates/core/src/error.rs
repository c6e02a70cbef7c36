use thiserror::Error;

use crate::context::ContextError;
use crate::corpus::{AnnotatorId, CorpusError, Split};
use crate::encoder::EncoderError;
use crate::neural::NeuralError;

/// Failures of the trainable predictors.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("annotator '{0}' is not in the embedding table and cold start is disabled")]
    UnknownAnnotator(AnnotatorId),
    #[error("no profile for annotator '{0}'")]
    MissingProfile(AnnotatorId),
    #[error("the {0} split has no records")]
    EmptySplit(Split),
    #[error("{0}")]
    Config(String),
}
