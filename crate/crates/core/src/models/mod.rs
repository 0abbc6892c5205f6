//! Localization methods and error metrics.

pub mod cnn;
pub mod knn;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GroundPoint;
use crate::preprocess::{Normalizer, WindowSample};

pub use cnn::{cnn_backward, train_cnn, CnnModel, TrainConfig, TrainOutcome};
pub use knn::FingerprintDb;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("{predictions} predictions vs {truths} ground-truth points")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// L2 error statistics, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_l2_m: f64,
    /// Population standard deviation of the L2 errors.
    pub std_l2_m: f64,
    pub mae_x_m: f64,
    pub mae_y_m: f64,
    pub errors: Vec<f64>,
}

pub fn evaluate(predictions: &[GroundPoint], truths: &[GroundPoint]) -> Result<EvalReport, ModelError> {
    if predictions.len() != truths.len() {
        return Err(ModelError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    if predictions.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let n = predictions.len() as f64;
    let errors: Vec<f64> = predictions.iter().zip(truths).map(|(p, t)| p.distance(t)).collect();
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let mae_x = predictions.iter().zip(truths).map(|(p, t)| (p.x - t.x).abs()).sum::<f64>() / n;
    let mae_y = predictions.iter().zip(truths).map(|(p, t)| (p.y - t.y).abs()).sum::<f64>() / n;
    Ok(EvalReport { mean_l2_m: mean, std_l2_m: var.sqrt(), mae_x_m: mae_x, mae_y_m: mae_y, errors })
}

/// Fingerprint database built from the raw center RSS of each window.
pub fn fingerprint_db(train: &[WindowSample], k: usize, m_interp: usize) -> Result<FingerprintDb, ModelError> {
    FingerprintDb::new(train.iter().map(|s| (s.raw_rss.clone(), s.label)).collect(), k, m_interp)
}

/// A CNN paired with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnLocalizer {
    pub model: CnnModel,
    pub normalizer: Normalizer,
}

impl CnnLocalizer {
    /// Fits normalization on `train` and trains a network on it.
    pub fn fit(train: &[WindowSample], cfg: &TrainConfig) -> Result<(Self, TrainOutcome), ModelError> {
        let first = train.first().ok_or(ModelError::EmptyInput)?;
        let normalizer = Normalizer::fit(train).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        let inputs: Vec<Vec<f64>> = train.iter().map(|s| normalizer.normalize_window(s)).collect();
        let labels: Vec<[f64; 2]> = train.iter().map(|s| normalizer.normalize_label(&s.label)).collect();
        let outcome = train_cnn(&inputs, &labels, first.num_aps, cfg)?;
        Ok((Self { model: outcome.model.clone(), normalizer }, outcome))
    }

    pub fn predict(&self, samples: &[WindowSample]) -> Result<Vec<GroundPoint>, ModelError> {
        let inputs: Vec<Vec<f64>> = samples.iter().map(|s| self.normalizer.normalize_window(s)).collect();
        Ok(self.model.forward_batch(&inputs)?.into_iter().map(|v| self.normalizer.denormalize_label(v)).collect())
    }
}
