use serde::{Deserialize, Serialize};

use super::noise::NoiseSpec;
use crate::error::{validation_err, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Label noise that has been applied to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedNoise {
    pub spec: NoiseSpec,
    pub seed: u64,
}

/// Inputs with hidden true labels and observed (possibly noisy) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub true_labels: Vec<usize>,
    pub noisy_labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
    pub seed: u64,
    pub noise: Option<AppliedNoise>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Per-class counts of the observed labels.
    pub fn noisy_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.noisy_labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn is_clean(&self) -> bool {
        self.true_labels == self.noisy_labels
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.rows();
        if self.true_labels.len() != n || self.noisy_labels.len() != n {
            return validation_err(format!(
                "{n} inputs but {} true and {} noisy labels",
                self.true_labels.len(),
                self.noisy_labels.len()
            ));
        }
        if self.classes < 2 {
            return validation_err("need at least two classes");
        }
        if self
            .true_labels
            .iter()
            .chain(&self.noisy_labels)
            .any(|&y| y >= self.classes)
        {
            return validation_err("label out of range");
        }
        if !self.inputs.is_finite() {
            return validation_err("non-finite input");
        }
        if self.split != Split::Train && !self.is_clean() {
            return validation_err(format!("{} split must carry clean labels", self.split));
        }
        Ok(())
    }

    pub(crate) fn require_clean_train(&self) -> Result<()> {
        if self.split != Split::Train {
            return validation_err("label noise is only injected into the train split");
        }
        if !self.is_clean() {
            return validation_err("noise injection expects a clean dataset");
        }
        Ok(())
    }
}

/// Fraction of samples whose observed label differs from the true label.
pub fn noise_rate(ds: &Dataset) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let flipped = ds
        .true_labels
        .iter()
        .zip(&ds.noisy_labels)
        .filter(|(t, n)| t != n)
        .count();
    flipped as f64 / ds.len() as f64
}
