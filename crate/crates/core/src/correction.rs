//! Hard-sample label correction by anchor voting.
//!
//! Each anchor is matched to its most similar hard feature. Anchors whose
//! match similarity exceeds `lambda_conf` become valid representatives of
//! that feature; every hard sample keeps its `k` most similar
//! representatives and takes their majority label.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{validation_err, Result};
use crate::hallucinator::{AnchorSet, FeatureSet};
use crate::nn::matrix::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionConfig {
    pub lambda_conf: f64,
    pub k: usize,
    /// A vote must exceed this agreeing fraction to relabel a sample.
    pub min_confidence: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            lambda_conf: 0.8,
            k: 10,
            min_confidence: 0.5,
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda_conf)?;
        if self.k == 0 {
            return validation_err("k must be at least 1");
        }
        if !(0.0..1.0).contains(&self.min_confidence) {
            return validation_err("min_confidence must lie in [0, 1)");
        }
        Ok(())
    }
}

fn check_lambda(lambda_conf: f64) -> Result<()> {
    if !(-1.0..1.0).contains(&lambda_conf) {
        return validation_err(format!("lambda_conf = {lambda_conf} outside [-1, 1)"));
    }
    Ok(())
}

/// Nearest-neighbour search over the hard features by cosine similarity.
pub trait NearestHard {
    /// Row of the most similar hard feature and its similarity.
    fn nearest(&self, query: &[f64]) -> Result<(usize, f64)>;
}

/// Exact linear scan; ties resolve to the lowest row.
pub struct ExhaustiveSearch<'a> {
    hard: &'a FeatureSet,
}

impl<'a> ExhaustiveSearch<'a> {
    pub fn new(hard: &'a FeatureSet) -> Result<Self> {
        if hard.is_empty() {
            return validation_err("hard set is empty");
        }
        Ok(Self { hard })
    }
}

impl NearestHard for ExhaustiveSearch<'_> {
    fn nearest(&self, query: &[f64]) -> Result<(usize, f64)> {
        let qn = norm(query);
        if qn == 0.0 || query.len() != self.hard.dim() {
            return validation_err("query must be a nonzero vector of the feature width");
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (r, row) in self.hard.features.iter_rows().enumerate() {
            let s = dot(query, row) / qn;
            if s > best.1 {
                best = (r, s);
            }
        }
        Ok((best.0, best.1.clamp(-1.0, 1.0)))
    }
}

pub fn nearest_hard(anchor: &[f64], hard: &FeatureSet) -> Result<(usize, f64)> {
    ExhaustiveSearch::new(hard)?.nearest(anchor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidRepresentative {
    pub anchor: usize,
    /// Row of the matched hard feature.
    pub hard_row: usize,
    pub similarity: f64,
    pub label: usize,
}

/// Anchors whose nearest hard feature is more similar than `lambda_conf`,
/// in anchor order.
pub fn validate_anchors(anchors: &AnchorSet, hard: &FeatureSet, lambda_conf: f64) -> Result<Vec<ValidRepresentative>> {
    check_lambda(lambda_conf)?;
    let search = ExhaustiveSearch::new(hard)?;
    let mut out = Vec::new();
    for (a, row) in anchors.anchors.iter_rows().enumerate() {
        let (r, s) = search.nearest(row)?;
        if s > lambda_conf {
            out.push(ValidRepresentative {
                anchor: a,
                hard_row: r,
                similarity: s,
                label: anchors.targets[a],
            });
        }
    }
    Ok(out)
}

/// Group representatives by matched hard row, keeping the `k` most similar
/// (ties by lower anchor index).
pub fn attach_representatives(valids: &[ValidRepresentative], hard_len: usize, k: usize) -> Result<Vec<Vec<ValidRepresentative>>> {
    if k == 0 {
        return validation_err("k must be at least 1");
    }
    let mut lists: Vec<Vec<ValidRepresentative>> = vec![Vec::new(); hard_len];
    for v in valids {
        if v.hard_row >= hard_len {
            return validation_err(format!("representative points at row {} of {hard_len}", v.hard_row));
        }
        lists[v.hard_row].push(*v);
    }
    for list in &mut lists {
        list.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.anchor.cmp(&b.anchor)));
        list.truncate(k);
    }
    Ok(lists)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub label: usize,
    /// Winning votes over total votes.
    pub confidence: f64,
}

/// Plurality label among the representatives. Ties go to the label with the
/// larger summed similarity, then to the lower label. `None` when empty.
pub fn majority_vote(reps: &[ValidRepresentative]) -> Option<Vote> {
    if reps.is_empty() {
        return None;
    }
    let classes = reps.iter().map(|r| r.label).max()? + 1;
    let mut counts = vec![0usize; classes];
    let mut sims = vec![0.0f64; classes];
    for r in reps {
        counts[r.label] += 1;
        sims[r.label] += r.similarity;
    }
    let mut best = 0;
    for c in 1..classes {
        let better = counts[c] > counts[best] || (counts[c] == counts[best] && sims[c] > sims[best]);
        if better {
            best = c;
        }
    }
    Some(Vote {
        label: best,
        confidence: counts[best] as f64 / reps.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedSample {
    /// Dataset index.
    pub index: usize,
    pub label: usize,
    pub confidence: f64,
    pub representatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionResult {
    /// Relabelled hard samples, in hard-row order.
    pub corrected: Vec<CorrectedSample>,
    /// Dataset indices of hard samples left unlabelled, in hard-row order.
    pub residual: Vec<usize>,
    /// Representatives kept for every hard row.
    pub representatives: Vec<Vec<ValidRepresentative>>,
    /// Dataset index of every hard row.
    pub hard_indices: Vec<usize>,
    pub valid_count: usize,
}

impl CorrectionResult {
    pub fn coverage(&self) -> f64 {
        if self.hard_indices.is_empty() {
            return 0.0;
        }
        self.corrected.len() as f64 / self.hard_indices.len() as f64
    }

    /// Fraction of corrected samples whose voted label is the true label.
    pub fn accuracy(&self, ds: &Dataset) -> Option<f64> {
        if self.corrected.is_empty() {
            return None;
        }
        let hits = self.corrected.iter().filter(|c| ds.true_labels[c.index] == c.label).count();
        Some(hits as f64 / self.corrected.len() as f64)
    }

    /// CSV with columns `hard_id, voted_label, confidence, n_reps,
    /// original_noisy_label, true_label`; the vote columns are empty for
    /// residual samples.
    pub fn write_csv<W: Write>(&self, ds: &Dataset, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["hard_id", "voted_label", "confidence", "n_reps", "original_noisy_label", "true_label"])?;
        let mut corrected = self.corrected.iter().peekable();
        for (row, &idx) in self.hard_indices.iter().enumerate() {
            let (label, conf) = match corrected.peek() {
                Some(c) if c.index == idx => {
                    let c = corrected.next().expect("peeked");
                    (c.label.to_string(), c.confidence.to_string())
                }
                _ => (String::new(), String::new()),
            };
            out.write_record([
                idx.to_string(),
                label,
                conf,
                self.representatives[row].len().to_string(),
                ds.noisy_labels[idx].to_string(),
                ds.true_labels[idx].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Full correction pass over the hard set.
pub fn correct_hard(anchors: &AnchorSet, hard: &FeatureSet, cfg: &CorrectionConfig) -> Result<CorrectionResult> {
    cfg.validate()?;
    let valids = if hard.is_empty() || anchors.is_empty() {
        Vec::new()
    } else {
        validate_anchors(anchors, hard, cfg.lambda_conf)?
    };
    let representatives = attach_representatives(&valids, hard.len(), cfg.k)?;
    let mut corrected = Vec::new();
    let mut residual = Vec::new();
    for (row, reps) in representatives.iter().enumerate() {
        let idx = hard.indices[row];
        match majority_vote(reps) {
            Some(v) if v.confidence > cfg.min_confidence => corrected.push(CorrectedSample {
                index: idx,
                label: v.label,
                confidence: v.confidence,
                representatives: reps.len(),
            }),
            _ => residual.push(idx),
        }
    }
    Ok(CorrectionResult {
        corrected,
        residual,
        representatives,
        hard_indices: hard.indices.clone(),
        valid_count: valids.len(),
    })
}
