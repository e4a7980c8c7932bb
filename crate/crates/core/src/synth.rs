//! Seeded synthetic prediction matrices with known ground truth.
//!
//! Generation scheme (stable across platforms): a `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)` is consumed sample by sample. For each sample it
//! draws the true label `gen_range(0..C)`, then one `f64` deciding whether the
//! sample is hard (`u < hard_fraction`), then for every model in column order
//! one `f64` `u`. The model is correct when `u < a_j` (scaled by
//! `1 - hard_penalty` on hard samples); otherwise one more draw
//! `gen_range(0..C-1)` picks a wrong label, skipping the true one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{GroundTruth, MatrixError, PredictionMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Target accuracy of every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Accuracies {
    Explicit(Vec<f64>),
    /// Evenly spaced from `min` (first model) to `max` (last model).
    Spaced {
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_models: usize,
    pub num_samples: usize,
    pub num_classes: u32,
    pub accuracies: Accuracies,
    pub hard_fraction: f64,
    pub hard_penalty: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn spaced(num_models: usize, num_samples: usize, num_classes: u32, min: f64, max: f64, seed: u64) -> Self {
        Self {
            num_models,
            num_samples,
            num_classes,
            accuracies: Accuracies::Spaced { min, max },
            hard_fraction: 0.0,
            hard_penalty: 0.5,
            seed,
        }
    }

    pub fn explicit(accuracies: Vec<f64>, num_samples: usize, num_classes: u32, seed: u64) -> Self {
        Self {
            num_models: accuracies.len(),
            num_samples,
            num_classes,
            accuracies: Accuracies::Explicit(accuracies),
            hard_fraction: 0.0,
            hard_penalty: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::Spec(msg));
        if self.num_models < 2 {
            return fail(format!("need at least 2 models, got {}", self.num_models));
        }
        if self.num_samples == 0 {
            return fail("need at least 1 sample".into());
        }
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.hard_fraction) {
            return fail(format!("hard_fraction must be in [0, 1), got {}", self.hard_fraction));
        }
        if !(0.0..=1.0).contains(&self.hard_penalty) {
            return fail(format!("hard_penalty must be in [0, 1], got {}", self.hard_penalty));
        }
        match &self.accuracies {
            Accuracies::Explicit(a) => {
                if a.len() != self.num_models {
                    return fail(format!("{} accuracies for {} models", a.len(), self.num_models));
                }
                if let Some(bad) = a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return fail(format!("accuracy {bad} outside [0, 1]"));
                }
            }
            Accuracies::Spaced { min, max } => {
                if !(0.0..=1.0).contains(min) || !(0.0..=1.0).contains(max) {
                    return fail(format!("accuracy range {min}:{max} outside [0, 1]"));
                }
                if min > max {
                    return fail(format!("accuracy range {min}:{max} is not ordered"));
                }
            }
        }
        Ok(())
    }

    pub fn target_accuracies(&self) -> Vec<f64> {
        match &self.accuracies {
            Accuracies::Explicit(a) => a.clone(),
            Accuracies::Spaced { min, max } => {
                let n = self.num_models;
                (0..n).map(|j| min + (max - min) * j as f64 / (n - 1) as f64).collect()
            }
        }
    }
}

/// Draws a prediction matrix and the ground truth it was generated from.
pub fn generate(spec: &SynthSpec) -> Result<(PredictionMatrix, GroundTruth), SynthError> {
    spec.validate()?;
    let acc = spec.target_accuracies();
    let (n, m, c) = (spec.num_models, spec.num_samples, spec.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = Vec::with_capacity(n * m);
    let mut truth = Vec::with_capacity(m);
    for _ in 0..m {
        let y = rng.gen_range(0..c);
        let hard = rng.gen::<f64>() < spec.hard_fraction;
        let scale = if hard { 1.0 - spec.hard_penalty } else { 1.0 };
        for &a in &acc {
            let label = if rng.gen::<f64>() < a * scale {
                y
            } else {
                let w = rng.gen_range(0..c - 1);
                if w >= y {
                    w + 1
                } else {
                    w
                }
            };
            labels.push(label);
        }
        truth.push(y);
    }
    let width = m.to_string().len();
    let ids: Vec<String> = (1..=m).map(|i| format!("x{i:0width$}")).collect();
    let names = (1..=n).map(|j| format!("model_{j}")).collect();
    let matrix = PredictionMatrix::new(names, ids.clone(), c, labels)?;
    Ok((matrix, GroundTruth::new(ids, truth)?))
}

/// Fraction of samples each model labels correctly.
pub fn realized_accuracy(matrix: &PredictionMatrix, truth: &GroundTruth) -> Result<Vec<f64>, MatrixError> {
    let y = truth.align(matrix)?;
    Ok(accuracy_on(matrix, &y, 0..matrix.num_samples()))
}

/// Accuracy of every model on a subset of rows, given aligned true labels.
pub(crate) fn accuracy_on(matrix: &PredictionMatrix, truth: &[u32], rows: impl IntoIterator<Item = usize>) -> Vec<f64> {
    let n = matrix.num_models();
    let mut hits = vec![0usize; n];
    let mut count = 0usize;
    for i in rows {
        count += 1;
        for (h, &l) in hits.iter_mut().zip(matrix.row(i)) {
            *h += (l == truth[i]) as usize;
        }
    }
    hits.iter().map(|&h| h as f64 / count as f64).collect()
}
