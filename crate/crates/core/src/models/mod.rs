//! Predictive models: tabular classifiers, the random-kernel sequence
//! transform, and anomaly predictors. All models are deterministic given
//! their spec, data, and seed.

pub mod anomaly;
mod gbdt;
pub mod sequence;
pub mod tabular;

pub use gbdt::{GbdtModel, GbdtParams, Tree, TreeNode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set contains a single class")]
    SingleClass,
    #[error("need at least {needed} training rows (got {got})")]
    TooFewRows { needed: usize, got: usize },
    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("feature arity mismatch: model has {expected}, rows have {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("too few minority rows for SMOTE interpolation (got {0})")]
    TooFewMinority(usize),
    #[error("lof neighbour count {k} must be smaller than the training size {rows}")]
    KTooLarge { k: usize, rows: usize },
    #[error("one-class solver did not reach tolerance {tolerance} in {iterations} iterations")]
    SolverNonConvergence { iterations: usize, tolerance: f64 },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

/// Anything that maps feature rows to scalar scores; implemented by
/// classifiers (probability of agitation) and anomaly models (higher = more
/// anomalous). Attribution and importance analyses work through this.
pub trait Scorer: Send + Sync {
    fn n_features(&self) -> usize;
    fn score_rows(&self, rows: &[Vec<f64>]) -> Vec<f64>;
}

pub(crate) fn validate_rows(rows: &[Vec<f64>]) -> Result<usize, ModelError> {
    let arity = rows.first().map_or(0, Vec::len);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != arity {
            return Err(ModelError::ArityMismatch {
                expected: arity,
                got: row.len(),
            });
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteFeature { row: i, column: j });
            }
        }
    }
    Ok(arity)
}

pub(crate) fn euclidean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
