//! Metrics, the ablation matrix runner and report rendering.

mod config;
mod metrics;
mod report;
mod runner;
mod spec;

use std::path::PathBuf;

use thiserror::Error;

use crate::context::ContextError;
use crate::corpus::CorpusError;
use crate::encoder::EncoderError;
use crate::icl::IclError;
use crate::ModelError;

pub use config::{AblateConfig, CorpusSection, DemographicsSection, PredictorEntry, RowSelection, SynthSection};
pub use metrics::{mae, relative_improvement, MetricError};
pub use report::{render_report, row, MatrixReport, MetricsRow, REPORT_JSON, REPORT_TABLE};
pub use runner::{run_ablation_matrix, CellOutcome, CellRunner, Imputer, StandardImputer, StandardRunner};
pub use spec::{canonical_ablations, canonical_index, row_label, ExperimentSpec, PredictorSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Icl(#[from] IclError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
}
