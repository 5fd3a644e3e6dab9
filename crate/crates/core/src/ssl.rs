//! MixMatch-style semi-supervised objective.
//!
//! Labelled samples get refined targets (given label blended with the mean
//! prediction over two augmented copies, then sharpened); unlabelled samples
//! get sharpened mean predictions as pseudo-labels. Both augmented copies of
//! every sample enter the batch, rows are mixed with random partners, and the
//! loss is cross-entropy on the labelled rows plus `lambda_mse` times the
//! squared error between predicted distributions and pseudo-labels on the
//! unlabelled rows.

use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Result};
use crate::nn::loss::{check_distribution, softmax, softmax_cross_entropy_grad, softmax_mse_grad, Target};
use crate::nn::{BundleGrads, Matrix, ModelBundle};
use crate::rng::Rng;
use crate::train::ClassifierOptim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SslConfig {
    pub lambda_mse: f64,
    pub temperature: f64,
    pub mixup_alpha: f64,
    /// Augmentation jitter as a fraction of each input feature's std.
    pub jitter: f64,
    pub rampup_epochs: usize,
    pub sharpen: bool,
    pub mixup: bool,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            lambda_mse: 1.0,
            temperature: 0.5,
            mixup_alpha: 4.0,
            jitter: 0.1,
            rampup_epochs: 10,
            sharpen: true,
            mixup: true,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !(self.mixup_alpha > 0.0) || !(self.lambda_mse >= 0.0) || !(self.jitter >= 0.0) {
            return validation_err("ssl needs temperature > 0, mixup_alpha > 0, lambda_mse >= 0, jitter >= 0");
        }
        Ok(())
    }

    fn temperature(&self) -> f64 {
        if self.sharpen {
            self.temperature
        } else {
            1.0
        }
    }

    /// Unlabelled-loss weight after linear ramp-up; `epoch` counts from 0.
    pub fn ramped_lambda(&self, epoch: usize) -> f64 {
        if self.rampup_epochs == 0 {
            return self.lambda_mse;
        }
        self.lambda_mse * ((epoch + 1) as f64 / self.rampup_epochs as f64).min(1.0)
    }
}

/// `x + N(0, sigma_j²)` per coordinate.
pub fn augment(x: &[f64], sigma: &[f64], rng: &mut Rng) -> Vec<f64> {
    x.iter()
        .zip(sigma)
        .map(|(&v, &s)| {
            if s > 0.0 {
                v + Normal::new(0.0, s).expect("positive scale").sample(rng)
            } else {
                v
            }
        })
        .collect()
}

/// `p^(1/T)` renormalised, evaluated in log space.
pub fn sharpen(p: &[f64], temperature: f64) -> Vec<f64> {
    if temperature == 1.0 {
        return p.to_vec();
    }
    let logits: Vec<f64> = p
        .iter()
        .map(|&v| if v > 0.0 { v.ln() / temperature } else { f64::NEG_INFINITY })
        .collect();
    softmax(&logits)
}

fn mean_prediction(model: &ModelBundle, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let mut data = a.to_vec();
    data.extend_from_slice(b);
    let probs = model.predict_proba(&Matrix::from_vec(2, a.len(), data)?)?;
    Ok(probs.row(0).iter().zip(probs.row(1)).map(|(x, y)| 0.5 * (x + y)).collect())
}

/// Sharpened mean prediction over two augmented copies of `x`.
pub fn pseudo_label(model: &ModelBundle, x: &[f64], sigma: &[f64], temperature: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let a = augment(x, sigma, rng);
    let b = augment(x, sigma, rng);
    Ok(sharpen(&mean_prediction(model, &a, &b)?, temperature))
}

/// `sharpen(w·given + (1−w)·predicted)`.
pub fn refine_label(given: &[f64], predicted: &[f64], weight: f64, temperature: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&weight) {
        return validation_err(format!("refinement weight {weight} outside [0, 1]"));
    }
    if given.len() != predicted.len() {
        return validation_err("label vectors differ in length");
    }
    check_distribution(given)?;
    check_distribution(predicted)?;
    let blended: Vec<f64> = given.iter().zip(predicted).map(|(g, p)| weight * g + (1.0 - weight) * p).collect();
    Ok(sharpen(&blended, temperature))
}

/// Convex combination with `λ' = max(λ, 1−λ)`, `λ ~ Beta(α, α)`.
/// Returns the mixed input, mixed label and `λ'`.
pub fn mixup(
    first: (&[f64], &[f64]),
    second: (&[f64], &[f64]),
    alpha: f64,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let beta = Beta::new(alpha, alpha).map_err(|e| crate::Error::Validation(format!("mixup alpha: {e}")))?;
    let l: f64 = beta.sample(rng);
    let l = l.max(1.0 - l);
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| l * x + (1.0 - l) * y).collect();
    Ok((mix(first.0, second.0), mix(first.1, second.1), l))
}

/// Where a labelled sample's target came from; fixes its refinement weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum LabelSource {
    /// Easy sample; weight is its easiness score.
    Easy { omega: f64 },
    /// Hard sample relabelled by voting; weight is the vote confidence.
    Corrected { confidence: f64 },
}

impl LabelSource {
    pub fn weight(&self) -> f64 {
        match *self {
            LabelSource::Easy { omega } => omega,
            LabelSource::Corrected { confidence } => confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub index: usize,
    pub label: usize,
    pub source: LabelSource,
}

/// Per-row provenance of a built batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowOrigin {
    /// Dataset index of the sample.
    pub index: usize,
    pub labeled: bool,
    /// Refinement weight (labelled rows only).
    pub weight: Option<f64>,
    /// Row this one was mixed with and the mixing coefficient.
    pub mixed_with: Option<(usize, f64)>,
}

/// Mixed inputs and target distributions ready for the loss.
#[derive(Debug, Clone)]
pub struct SslBatch {
    pub labeled_inputs: Matrix,
    pub labeled_targets: Matrix,
    pub unlabeled_inputs: Matrix,
    pub unlabeled_targets: Matrix,
    pub origin: Vec<RowOrigin>,
}

fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

/// Build one MixMatch batch with the current model.
pub fn build_batch(
    model: &ModelBundle,
    inputs: &Matrix,
    labeled: &[LabeledSample],
    unlabeled: &[usize],
    sigma: &[f64],
    cfg: &SslConfig,
    rng: &mut Rng,
) -> Result<SslBatch> {
    let c = model.classes();
    let d = inputs.cols();
    let t = cfg.temperature();
    let sources: Vec<usize> = labeled.iter().map(|s| s.index).chain(unlabeled.iter().copied()).collect();

    // two augmented copies per sample, rows 2i and 2i+1
    let mut augmented = Vec::with_capacity(2 * sources.len() * d);
    for &i in &sources {
        for _ in 0..2 {
            augmented.extend(augment(inputs.row(i), sigma, rng));
        }
    }
    let augmented = Matrix::from_vec(2 * sources.len(), d, augmented)?;
    let probs = model.predict_proba(&augmented)?;

    let mut rows: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(2 * sources.len());
    let mut origin = Vec::with_capacity(rows.capacity());
    for (k, &i) in sources.iter().enumerate() {
        let mean: Vec<f64> = probs.row(2 * k).iter().zip(probs.row(2 * k + 1)).map(|(x, y)| 0.5 * (x + y)).collect();
        let (target, weight) = match labeled.get(k) {
            Some(s) => {
                let w = s.source.weight();
                (refine_label(&one_hot(s.label, c), &mean, w, t)?, Some(w))
            }
            None => (sharpen(&mean, t), None),
        };
        for copy in 0..2 {
            rows.push((augmented.row(2 * k + copy).to_vec(), target.clone()));
            origin.push(RowOrigin {
                index: i,
                labeled: weight.is_some(),
                weight,
                mixed_with: None,
            });
        }
    }
    if cfg.mixup && rows.len() > 1 {
        let mut partners: Vec<usize> = (0..rows.len()).collect();
        partners.shuffle(rng);
        let original = rows.clone();
        for (r, &p) in partners.iter().enumerate() {
            let (x, y, l) = mixup(
                (&original[r].0, &original[r].1),
                (&original[p].0, &original[p].1),
                cfg.mixup_alpha,
                rng,
            )?;
            rows[r] = (x, y);
            origin[r].mixed_with = Some((p, l));
        }
    }
    let n_lab = 2 * labeled.len();
    let pack = |part: &[(Vec<f64>, Vec<f64>)]| -> Result<(Matrix, Matrix)> {
        let xs = part.iter().flat_map(|r| r.0.iter().copied()).collect();
        let ys = part.iter().flat_map(|r| r.1.iter().copied()).collect();
        Ok((Matrix::from_vec(part.len(), d, xs)?, Matrix::from_vec(part.len(), c, ys)?))
    };
    let (labeled_inputs, labeled_targets) = pack(&rows[..n_lab])?;
    let (unlabeled_inputs, unlabeled_targets) = pack(&rows[n_lab..])?;
    Ok(SslBatch {
        labeled_inputs,
        labeled_targets,
        unlabeled_inputs,
        unlabeled_targets,
        origin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SslLoss {
    pub total: f64,
    pub ce: f64,
    pub mse: f64,
}

/// `L_CE + lambda_mse · L_MSE` and its gradients for extractor and classifier.
pub fn ssl_loss(model: &ModelBundle, batch: &SslBatch, lambda_mse: f64) -> Result<(SslLoss, BundleGrads)> {
    let n_lab = batch.labeled_inputs.rows();
    let n_unl = batch.unlabeled_inputs.rows();
    if n_lab + n_unl == 0 {
        return validation_err("empty batch");
    }
    let d = model.input_dim();
    let mut all = batch.labeled_inputs.as_slice().to_vec();
    all.extend_from_slice(batch.unlabeled_inputs.as_slice());
    let x = Matrix::from_vec(n_lab + n_unl, d, all)?;
    let (logits, trace) = model.logits_traced(&x)?;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut ce = 0.0;
    for r in 0..n_lab {
        let (l, g) = softmax_cross_entropy_grad(logits.row(r), Target::Dist(batch.labeled_targets.row(r)))?;
        ce += l;
        let s = 1.0 / n_lab as f64;
        grad.row_mut(r).iter_mut().zip(g).for_each(|(o, v)| *o = v * s);
    }
    let mut mse = 0.0;
    for r in 0..n_unl {
        let (l, g) = softmax_mse_grad(logits.row(n_lab + r), batch.unlabeled_targets.row(r))?;
        mse += l;
        let s = lambda_mse / n_unl as f64;
        grad.row_mut(n_lab + r).iter_mut().zip(g).for_each(|(o, v)| *o = v * s);
    }
    let ce = if n_lab > 0 { ce / n_lab as f64 } else { 0.0 };
    let mse = if n_unl > 0 { mse / n_unl as f64 } else { 0.0 };
    let grads = model.backward_logits(&trace, &grad)?;
    Ok((
        SslLoss {
            total: ce + lambda_mse * mse,
            ce,
            mse,
        },
        grads,
    ))
}

/// One pass over the labelled set. Each labelled batch is paired with an
/// equally sized slice of the unlabelled set, cycling through it in a fresh
/// random order. Returns the mean batch loss.
#[allow(clippy::too_many_arguments)]
pub fn ssl_epoch(
    model: &mut ModelBundle,
    opt: &mut ClassifierOptim,
    inputs: &Matrix,
    labeled: &[LabeledSample],
    unlabeled: &[usize],
    sigma: &[f64],
    cfg: &SslConfig,
    lambda_mse: f64,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if labeled.is_empty() {
        return validation_err("labelled set is empty");
    }
    let mut lab_order: Vec<usize> = (0..labeled.len()).collect();
    lab_order.shuffle(rng);
    let mut unl_order = unlabeled.to_vec();
    unl_order.shuffle(rng);
    let mut cursor = 0;
    let mut total = 0.0;
    let mut count = 0;
    for chunk in lab_order.chunks(batch_size.max(1)) {
        let lab: Vec<LabeledSample> = chunk.iter().map(|&i| labeled[i]).collect();
        let mut unl = Vec::with_capacity(chunk.len());
        if !unl_order.is_empty() {
            for _ in 0..chunk.len().min(unl_order.len()) {
                unl.push(unl_order[cursor % unl_order.len()]);
                cursor += 1;
            }
        }
        let batch = build_batch(model, inputs, &lab, &unl, sigma, cfg, rng)?;
        let (loss, grads) = ssl_loss(model, &batch, lambda_mse)?;
        opt.extractor.step(&mut model.extractor, &grads.extractor)?;
        opt.classifier.step(&mut model.classifier, &grads.classifier)?;
        total += loss.total;
        count += 1;
    }
    Ok(total / count as f64)
}
