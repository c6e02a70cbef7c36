use thiserror::Error;

use crate::corpus::Rating;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{predictions} predictions but {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("cannot score an empty prediction set")]
    Empty,
    #[error("baseline MAE must be positive, got {0}")]
    NonPositiveBaseline(f64),
}

/// Micro-averaged mean absolute error over all pairs.
pub fn mae(predictions: &[Rating], truths: &[Rating]) -> Result<f64, MetricError> {
    if predictions.len() != truths.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    let total: u64 = predictions.iter().zip(truths).map(|(p, t)| u64::from(p.abs_diff(*t))).sum();
    Ok(total as f64 / predictions.len() as f64)
}

/// Percentage reduction of `mae` relative to `baseline_mae`.
pub fn relative_improvement(baseline_mae: f64, mae: f64) -> Result<f64, MetricError> {
    if !(baseline_mae > 0.0) {
        return Err(MetricError::NonPositiveBaseline(baseline_mae));
    }
    Ok(100.0 * (baseline_mae - mae) / baseline_mae)
}
