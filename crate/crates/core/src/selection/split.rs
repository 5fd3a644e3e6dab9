use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{validation_err, Result};

/// Easy/hard partition of the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EasySplit {
    pub omega: Vec<f64>,
    /// Sorted ascending.
    pub easy: Vec<usize>,
    /// Sorted ascending.
    pub hard: Vec<usize>,
    /// Easy samples per observed class.
    pub easy_counts: Vec<usize>,
    /// Samples per observed class.
    pub class_totals: Vec<usize>,
    /// Selection percentage, `None` for the plain posterior-threshold split.
    pub percent: Option<f64>,
}

impl EasySplit {
    pub fn is_easy_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.omega.len()];
        for &i in &self.easy {
            mask[i] = true;
        }
        mask
    }

    /// CSV with columns `id, class, omega, partition`.
    pub fn write_csv<W: Write>(&self, ds: &Dataset, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "class", "omega", "partition"])?;
        let mask = self.is_easy_mask();
        for (i, easy) in mask.iter().enumerate() {
            out.write_record([
                i.to_string(),
                ds.noisy_labels[i].to_string(),
                self.omega[i].to_string(),
                if *easy { "easy" } else { "hard" }.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `min(⌈N·(P/100)/C⌉, N_j)`.
pub fn easy_quota(n: usize, classes: usize, percent: f64, class_total: usize) -> usize {
    let q = n as f64 * percent / (100.0 * classes as f64);
    // snap values that are integral up to rounding error
    let ceil = if (q - q.round()).abs() < 1e-9 { q.round() } else { q.ceil() };
    (ceil as usize).min(class_total)
}

fn check_inputs(ds: &Dataset, omega: &[f64]) -> Result<Vec<usize>> {
    if omega.len() != ds.len() {
        return validation_err(format!("{} scores for {} samples", omega.len(), ds.len()));
    }
    let totals = ds.noisy_class_counts();
    if let Some(j) = totals.iter().position(|&t| t == 0) {
        return validation_err(format!("class {j} has no samples"));
    }
    Ok(totals)
}

fn finish(ds: &Dataset, omega: &[f64], easy_mask: Vec<bool>, totals: Vec<usize>, percent: Option<f64>) -> EasySplit {
    let mut easy_counts = vec![0; ds.classes];
    let (mut easy, mut hard) = (Vec::new(), Vec::new());
    for (i, e) in easy_mask.into_iter().enumerate() {
        if e {
            easy_counts[ds.noisy_labels[i]] += 1;
            easy.push(i);
        } else {
            hard.push(i);
        }
    }
    EasySplit {
        omega: omega.to_vec(),
        easy,
        hard,
        easy_counts,
        class_totals: totals,
        percent,
    }
}

/// Per observed class, the `M_j` samples with the highest easiness become
/// easy; ties go to the lower index.
pub fn class_balanced_split(ds: &Dataset, omega: &[f64], percent: f64) -> Result<EasySplit> {
    if !(percent > 0.0 && percent <= 100.0) {
        return validation_err(format!("P = {percent} must lie in (0, 100]"));
    }
    let totals = check_inputs(ds, omega)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &y) in ds.noisy_labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut mask = vec![false; ds.len()];
    for (j, members) in by_class.iter_mut().enumerate() {
        members.sort_by(|&a, &b| omega[b].total_cmp(&omega[a]).then(a.cmp(&b)));
        let quota = easy_quota(ds.len(), ds.classes, percent, totals[j]);
        for &i in &members[..quota] {
            mask[i] = true;
        }
    }
    Ok(finish(ds, omega, mask, totals, Some(percent)))
}

/// Unbalanced split: easy iff easiness exceeds 0.5.
pub fn threshold_split(ds: &Dataset, omega: &[f64]) -> Result<EasySplit> {
    let totals = check_inputs(ds, omega)?;
    let mask = omega.iter().map(|&w| w > 0.5).collect();
    Ok(finish(ds, omega, mask, totals, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionQuality {
    /// Fraction of easy samples whose observed label is correct.
    pub precision: f64,
    /// Fraction of correctly labelled samples that were selected as easy.
    pub recall: f64,
}

pub fn selection_quality(split: &EasySplit, ds: &Dataset) -> SelectionQuality {
    let clean = |i: usize| ds.noisy_labels[i] == ds.true_labels[i];
    let easy_clean = split.easy.iter().filter(|&&i| clean(i)).count();
    let total_clean = (0..ds.len()).filter(|&i| clean(i)).count();
    SelectionQuality {
        precision: if split.easy.is_empty() { 0.0 } else { easy_clean as f64 / split.easy.len() as f64 },
        recall: if total_clean == 0 { 0.0 } else { easy_clean as f64 / total_clean as f64 },
    }
}
