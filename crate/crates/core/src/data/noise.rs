//! Label-noise injectors.
//!
//! Instance-independent: symmetric (uniform over wrong classes) and
//! asymmetric (fixed class map). Instance-dependent: a part-wise projection
//! construction where each input part contributes its own flip mass and
//! destination row (scores are standardised within each true class, so the
//! flip rate varies inside a class while every class stays near the target
//! rate), and a classification-based construction that flips the
//! samples a probe classifier confuses most.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{AppliedNoise, Dataset};
use crate::error::{validation_err, Result};
use crate::nn::matrix::{dot, norm};
use crate::nn::model::argmax;
use crate::nn::{Matrix, ModelBundle};
use crate::rng::{self, Rng};
use crate::train::{self, ClassifierOptim};

pub const DEFAULT_PROBE_EPOCHS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    None,
    Symmetric {
        rate: f64,
    },
    Asymmetric {
        rate: f64,
        /// `map[j]` is the class that samples of class `j` flip to.
        /// Defaults to `j → j+1 mod C`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        map: Option<Vec<usize>>,
    },
    FeatureDependent {
        rate: f64,
        parts: usize,
    },
    ClassificationBased {
        rate: f64,
        #[serde(default = "default_probe_epochs")]
        probe_epochs: usize,
    },
}

fn default_probe_epochs() -> usize {
    DEFAULT_PROBE_EPOCHS
}

impl NoiseSpec {
    pub fn rate(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Symmetric { rate }
            | NoiseSpec::Asymmetric { rate, .. }
            | NoiseSpec::FeatureDependent { rate, .. }
            | NoiseSpec::ClassificationBased { rate, .. } => rate,
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        check_rate(self.rate())?;
        match self {
            NoiseSpec::Asymmetric { map: Some(map), .. } => {
                let mut seen = vec![false; classes];
                if map.len() != classes {
                    return validation_err("asymmetric map must have one entry per class");
                }
                for (j, &k) in map.iter().enumerate() {
                    if k >= classes || seen[k] || k == j {
                        return validation_err("asymmetric map must be a fixed-point-free permutation");
                    }
                    seen[k] = true;
                }
                Ok(())
            }
            NoiseSpec::FeatureDependent { parts: 0, .. } => validation_err("parts must be at least 1"),
            _ => Ok(()),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return validation_err(format!("noise rate {rate} must lie in [0, 1)"));
    }
    Ok(())
}

fn forced_count(rate: f64, n: usize) -> usize {
    (rate * n as f64).round() as usize
}

fn with_noise(ds: &Dataset, noisy: Vec<usize>, spec: NoiseSpec, seed: u64) -> Dataset {
    Dataset {
        noisy_labels: noisy,
        noise: Some(AppliedNoise { spec, seed }),
        ..ds.clone()
    }
}

/// Apply any noise kind.
pub fn inject(ds: &Dataset, spec: &NoiseSpec, seed: u64) -> Result<Dataset> {
    spec.validate(ds.classes)?;
    match spec {
        NoiseSpec::None => {
            ds.require_clean_train()?;
            Ok(with_noise(ds, ds.noisy_labels.clone(), spec.clone(), seed))
        }
        NoiseSpec::Symmetric { rate } => inject_symmetric(ds, *rate, seed),
        NoiseSpec::Asymmetric { rate, map } => inject_asymmetric(ds, *rate, map.as_deref(), seed),
        NoiseSpec::FeatureDependent { rate, parts } => inject_feature_dependent(ds, *rate, *parts, seed),
        NoiseSpec::ClassificationBased { rate, probe_epochs } => {
            inject_classification_based(ds, *rate, *probe_epochs, seed)
        }
    }
}

/// Flip exactly `round(rN)` uniformly chosen samples to a uniformly chosen
/// different class.
pub fn inject_symmetric(ds: &Dataset, rate: f64, seed: u64) -> Result<Dataset> {
    check_rate(rate)?;
    ds.require_clean_train()?;
    let mut rng = rng::stream(seed, "noise-symmetric", 0);
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng);
    let mut noisy = ds.true_labels.clone();
    for &i in &idx[..forced_count(rate, ds.len())] {
        let offset = rng.random_range(1..ds.classes);
        noisy[i] = (ds.true_labels[i] + offset) % ds.classes;
    }
    Ok(with_noise(ds, noisy, NoiseSpec::Symmetric { rate }, seed))
}

/// Flip exactly `round(rN)` uniformly chosen samples through a class map.
pub fn inject_asymmetric(ds: &Dataset, rate: f64, map: Option<&[usize]>, seed: u64) -> Result<Dataset> {
    let spec = NoiseSpec::Asymmetric {
        rate,
        map: map.map(<[usize]>::to_vec),
    };
    spec.validate(ds.classes)?;
    ds.require_clean_train()?;
    let c = ds.classes;
    let target = |j: usize| map.map_or((j + 1) % c, |m| m[j]);
    let mut rng = rng::stream(seed, "noise-asymmetric", 0);
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng);
    let mut noisy = ds.true_labels.clone();
    for &i in &idx[..forced_count(rate, ds.len())] {
        noisy[i] = target(ds.true_labels[i]);
    }
    Ok(with_noise(ds, noisy, spec, seed))
}

/// Column ranges of the `parts` input slices; the last absorbs the remainder.
fn part_ranges(dim: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let width = dim / parts;
    (0..parts)
        .map(|k| {
            let end = if k + 1 == parts { dim } else { (k + 1) * width };
            k * width..end
        })
        .collect()
}

/// Per-instance flip probabilities and destination distributions of the
/// part-wise construction.
#[derive(Debug, Clone)]
pub struct PartNoiseModel {
    /// Flip probability of every sample, mean equal to the target rate.
    pub flip_prob: Vec<f64>,
    /// Destination distribution over classes (zero at the true class).
    pub destination: Matrix,
    /// Unscaled per-sample flip mass (mean of the per-part scores).
    pub raw_mass: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scale `c` such that `mean(min(1, c·m)) = rate`, by bisection.
fn calibrate_scale(mass: &[f64], rate: f64) -> f64 {
    let mean_at = |c: f64| mass.iter().map(|m| (c * m).min(1.0)).sum::<f64>() / mass.len() as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    while mean_at(hi) < rate && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Build the part-wise instance-dependent noise model for a clean dataset.
pub fn part_noise_model(ds: &Dataset, rate: f64, parts: usize, seed: u64) -> Result<PartNoiseModel> {
    check_rate(rate)?;
    let dim = ds.input_dim();
    if parts == 0 || parts > dim {
        return validation_err(format!("parts must lie in 1..={dim}"));
    }
    let c = ds.classes;
    let n = ds.len();
    let mut rng = rng::stream(seed, "noise-part-model", 0);
    let ranges = part_ranges(dim, parts);

    // per-part projection and per-(part, class) destination row
    let mut projections = Vec::with_capacity(parts);
    let mut rows = Vec::with_capacity(parts);
    for r in &ranges {
        let w: Vec<f64> = (0..r.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nw = norm(&w).max(1e-12);
        projections.push(w.into_iter().map(|x| x / nw).collect::<Vec<f64>>());
        let mut per_class = Matrix::zeros(c, c);
        for y in 0..c {
            let row = per_class.row_mut(y);
            for (k, v) in row.iter_mut().enumerate() {
                if k != y {
                    *v = rng.random_range(0.05..1.0);
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        rows.push(per_class);
    }

    // per-part scores standardised within each true class, squashed to (0, 1)
    let mut scores = Matrix::zeros(n, parts);
    for (k, (r, w)) in ranges.iter().zip(&projections).enumerate() {
        let raw: Vec<f64> = (0..n).map(|i| dot(&ds.inputs.row(i)[r.clone()], w)).collect();
        let mut count = vec![0.0f64; c];
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for (i, s) in raw.iter().enumerate() {
            count[ds.true_labels[i]] += 1.0;
            mean[ds.true_labels[i]] += s;
        }
        mean.iter_mut().zip(&count).for_each(|(m, n)| *m /= n.max(1.0));
        for (i, s) in raw.iter().enumerate() {
            let y = ds.true_labels[i];
            var[y] += (s - mean[y]).powi(2) / count[y];
        }
        for (i, s) in raw.iter().enumerate() {
            let y = ds.true_labels[i];
            let sd = var[y].sqrt();
            let z = if sd > 0.0 { (s - mean[y]) / sd } else { 0.0 };
            scores[(i, k)] = sigmoid(2.0 * z);
        }
    }

    let mut raw_mass = Vec::with_capacity(n);
    let mut destination = Matrix::zeros(n, c);
    for i in 0..n {
        let y = ds.true_labels[i];
        let z = scores.row(i);
        let mass = z.iter().sum::<f64>() / parts as f64;
        raw_mass.push(mass);
        let dest = destination.row_mut(i);
        for (k, zk) in z.iter().enumerate() {
            for (d, q) in dest.iter_mut().zip(rows[k].row(y)) {
                *d += zk * q;
            }
        }
        let s: f64 = dest.iter().sum();
        if s > 0.0 {
            dest.iter_mut().for_each(|v| *v /= s);
        } else {
            dest.copy_from_slice(rows[0].row(y));
        }
    }
    let scale = if rate == 0.0 { 0.0 } else { calibrate_scale(&raw_mass, rate) };
    let flip_prob = raw_mass.iter().map(|m| (scale * m).min(1.0)).collect();
    Ok(PartNoiseModel {
        flip_prob,
        destination,
        raw_mass,
    })
}

/// Systematic sampling over a random order: every sample is flipped with
/// exactly its own probability, and the total count is within one of the sum.
fn systematic_flips(prob: &[f64], rng: &mut Rng) -> Vec<bool> {
    let mut order: Vec<usize> = (0..prob.len()).collect();
    order.shuffle(rng);
    let offset: f64 = rng.random();
    let mut flips = vec![false; prob.len()];
    let mut cum = 0.0;
    for &i in &order {
        let next = cum + prob[i];
        // a grid point offset + k lies in [cum, next)
        if (next - offset).floor() > (cum - offset).floor() {
            flips[i] = true;
        }
        cum = next;
    }
    flips
}

fn sample_class(dist: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Part-wise instance-dependent noise with mean flip rate `rate`.
pub fn inject_feature_dependent(ds: &Dataset, rate: f64, parts: usize, seed: u64) -> Result<Dataset> {
    check_rate(rate)?;
    ds.require_clean_train()?;
    let model = part_noise_model(ds, rate, parts, seed)?;
    let mut rng = rng::stream(seed, "noise-part-flips", 0);
    let flips = systematic_flips(&model.flip_prob, &mut rng);
    let mut noisy = ds.true_labels.clone();
    for (i, flip) in flips.into_iter().enumerate() {
        if flip {
            noisy[i] = sample_class(model.destination.row(i), &mut rng);
        }
    }
    Ok(with_noise(ds, noisy, NoiseSpec::FeatureDependent { rate, parts }, seed))
}

/// Per-sample softmax outputs of a probe classifier trained on the clean
/// labels, averaged over the `epochs` training epochs.
pub fn probe_confusion(ds: &Dataset, epochs: usize, seed: u64) -> Result<Matrix> {
    if epochs == 0 {
        return validation_err("probe needs at least one epoch");
    }
    let mut init = rng::stream(seed, "noise-probe-init", 0);
    let mut model = ModelBundle::new(&[ds.input_dim(), 32, 16], ds.classes, 32, &mut init)?;
    let mut opt = ClassifierOptim::new(0.05, 0.9);
    let mut order = rng::stream(seed, "noise-probe-batches", 0);
    let mut avg = Matrix::zeros(ds.len(), ds.classes);
    for _ in 0..epochs {
        train::supervised_epoch(&mut model, &mut opt, &ds.inputs, &ds.true_labels, 64, &mut order)?;
        let p = model.predict_proba(&ds.inputs)?;
        avg.as_mut_slice().iter_mut().zip(p.as_slice()).for_each(|(a, b)| *a += b);
    }
    avg.as_mut_slice().iter_mut().for_each(|a| *a /= epochs as f64);
    Ok(avg)
}

/// Largest averaged probability among the wrong classes, and that class.
pub fn top_wrong_class(probs: &[f64], true_label: usize) -> (usize, f64) {
    let mut masked = probs.to_vec();
    masked[true_label] = f64::NEG_INFINITY;
    let k = argmax(&masked);
    (k, probs[k])
}

/// Flip the `round(rN)` samples whose averaged probe output puts the most
/// mass on a single wrong class, to that class.
pub fn inject_classification_based(ds: &Dataset, rate: f64, probe_epochs: usize, seed: u64) -> Result<Dataset> {
    check_rate(rate)?;
    ds.require_clean_train()?;
    let spec = NoiseSpec::ClassificationBased { rate, probe_epochs };
    let count = forced_count(rate, ds.len());
    if count == 0 {
        return Ok(with_noise(ds, ds.true_labels.clone(), spec, seed));
    }
    let avg = probe_confusion(ds, probe_epochs, seed)?;
    let wrong: Vec<(usize, f64)> = (0..ds.len())
        .map(|i| top_wrong_class(avg.row(i), ds.true_labels[i]))
        .collect();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| wrong[b].1.total_cmp(&wrong[a].1).then(a.cmp(&b)));
    let mut noisy = ds.true_labels.clone();
    for &i in &order[..count] {
        noisy[i] = wrong[i].0;
    }
    Ok(with_noise(ds, noisy, spec, seed))
}
