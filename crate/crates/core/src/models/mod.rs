//! Classifiers: closed-form ELM, OS-ELM (recursive least squares) and the
//! SPLR-ELM online rule, plus shared evaluation.

mod elm;
mod splr;
mod wta;

pub use elm::{one_hot, ElmModel, OsElmModel};
pub use splr::{
    calibrate_threshold, Backend, EncodedSet, EpochStats, HiddenCode, OutputWeights, SplrConfig,
    SplrModel, StepOutcome, CALIBRATION_SAMPLES,
};
pub use wta::{wta_grad, wta_loss};

use serde::Serialize;
use thiserror::Error;

use crate::datasets::{Dataset, NUM_CLASSES};
use crate::linalg::LinalgError;
use crate::prng::PrngError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Prng(#[from] PrngError),
    #[error("input dimension {found} does not match model dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("label {0} is not below {NUM_CLASSES}")]
    Label(usize),
    #[error("model has not been fitted")]
    NotFitted,
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Index of the largest score; ties resolve to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub trait Classifier {
    fn predict(&self, x: &[f32]) -> Result<usize>;

    fn predict_batch(&self, data: &Dataset) -> Result<Vec<usize>> {
        data.iter().map(|s| self.predict(&s.features)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_recall: Vec<f64>,
    pub count: usize,
}

impl Metrics {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut confusion = vec![vec![0usize; NUM_CLASSES]; NUM_CLASSES];
        let mut count = 0;
        for (truth, pred) in pairs {
            confusion[truth][pred] += 1;
            count += 1;
        }
        let correct: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let per_class_recall = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[c] as f64 / n as f64
                }
            })
            .collect();
        Metrics {
            accuracy: if count == 0 {
                0.0
            } else {
                correct as f64 / count as f64
            },
            confusion,
            per_class_recall,
            count,
        }
    }
}

pub fn evaluate<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<Metrics> {
    let preds = model.predict_batch(data)?;
    Ok(Metrics::from_pairs(
        data.iter().map(|s| s.label).zip(preds),
    ))
}
