//! Hard-anchor hallucination.
//!
//! An anchor is the unit-normalised output of the hallucinator on the
//! concatenation of two easy features `(s_u, s_v)` from different classes;
//! it inherits the label of `s_u`. The hallucinator is trained to keep the
//! anchor close to both sources (weighted by `lambda_p`) while the frozen
//! classifier still assigns it to the class of `s_u`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, validation_err, Result};
use crate::nn::loss::{cosine_similarity, softmax_cross_entropy, softmax_cross_entropy_grad, Target};
use crate::nn::matrix::dot;
use crate::nn::model::{normalize_rows, normalize_rows_backward};
use crate::nn::{Gradients, Matrix, Mlp, ModelBundle, Sgd};
use crate::rng::Rng;
use crate::train::batches;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Easy,
    Hard,
}

/// Unit-norm features of a subset of the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Matrix,
    /// Dataset index of every row.
    pub indices: Vec<usize>,
    /// Observed label of every row.
    pub labels: Vec<usize>,
    pub role: Role,
}

impl FeatureSet {
    /// Embed the listed samples with the model's feature extractor.
    pub fn embed(model: &ModelBundle, inputs: &Matrix, labels: &[usize], indices: &[usize], role: Role) -> Result<Self> {
        let features = model.embed(&inputs.select_rows(indices))?;
        Ok(Self {
            features,
            indices: indices.to_vec(),
            labels: indices.iter().map(|&i| labels[i]).collect(),
            role,
        })
    }

    pub fn from_parts(features: Matrix, indices: Vec<usize>, labels: Vec<usize>, role: Role) -> Result<Self> {
        if features.rows() != indices.len() || indices.len() != labels.len() {
            return shape_err("feature rows, indices and labels must have equal length");
        }
        Ok(Self {
            features: normalize_rows(&features).unit,
            indices,
            labels,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Hallucinated anchors with their targets and source rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: Matrix,
    /// Target label of every anchor (the label of its `u` source).
    pub targets: Vec<usize>,
    /// Dataset indices of the `(u, v)` sources.
    pub sources: Vec<(usize, usize)>,
    pub lambda_p: f64,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HallucinatorConfig {
    pub lambda_p: f64,
    pub anchors_per_sample: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for HallucinatorConfig {
    fn default() -> Self {
        Self {
            lambda_p: 0.75,
            anchors_per_sample: 4,
            epochs: 5,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
        }
    }
}

impl HallucinatorConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda_p)?;
        if self.anchors_per_sample == 0 || self.batch_size == 0 {
            return validation_err("anchors_per_sample and batch_size must be positive");
        }
        if self.lr < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return validation_err("lr must be >= 0 and momentum in [0, 1)");
        }
        Ok(())
    }
}

fn check_lambda(lambda_p: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&lambda_p) {
        return validation_err(format!("lambda_p = {lambda_p} outside [0.5, 1.0]"));
    }
    Ok(())
}

/// For every row `u`, `per_sample` partner rows drawn uniformly among rows
/// with a different label. Pairs are row positions within `easy`.
pub fn sample_pairs(easy: &FeatureSet, per_sample: usize, rng: &mut Rng) -> Result<Vec<(usize, usize)>> {
    let classes = easy.labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut present = vec![false; classes];
    easy.labels.iter().for_each(|&y| present[y] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return validation_err("easy set must contain at least two classes");
    }
    let others: Vec<Vec<usize>> = (0..classes)
        .map(|c| (0..easy.len()).filter(|&r| easy.labels[r] != c).collect())
        .collect();
    let mut pairs = Vec::with_capacity(easy.len() * per_sample);
    for u in 0..easy.len() {
        let pool = &others[easy.labels[u]];
        for _ in 0..per_sample {
            pairs.push((u, pool[rng.random_range(0..pool.len())]));
        }
    }
    Ok(pairs)
}

fn concat_pairs(easy: &FeatureSet, pairs: &[(usize, usize)]) -> Matrix {
    let d = easy.dim();
    let mut x = Matrix::zeros(pairs.len(), 2 * d);
    for (r, &(u, v)) in pairs.iter().enumerate() {
        let row = x.row_mut(r);
        row[..d].copy_from_slice(easy.features.row(u));
        row[d..].copy_from_slice(easy.features.row(v));
    }
    x
}

/// Unit-normalised hallucinator output for one pair.
pub fn hallucinate(h: &Mlp, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != v.len() || h.in_dim() != 2 * u.len() {
        return shape_err(format!(
            "hallucinator takes {} inputs, got {} + {}",
            h.in_dim(),
            u.len(),
            v.len()
        ));
    }
    let mut x = u.to_vec();
    x.extend_from_slice(v);
    let z = h.forward(&Matrix::from_vec(1, x.len(), x)?)?;
    Ok(normalize_rows(&z).unit.into_vec())
}

/// Anchors for a list of row pairs of `easy`.
pub fn hallucinate_pairs(h: &Mlp, easy: &FeatureSet, pairs: &[(usize, usize)], lambda_p: f64) -> Result<AnchorSet> {
    if h.in_dim() != 2 * easy.dim() {
        return shape_err("hallucinator input width must be twice the feature width");
    }
    let z = h.forward(&concat_pairs(easy, pairs))?;
    Ok(AnchorSet {
        anchors: normalize_rows(&z).unit,
        targets: pairs.iter().map(|&(u, _)| easy.labels[u]).collect(),
        sources: pairs.iter().map(|&(u, v)| (easy.indices[u], easy.indices[v])).collect(),
        lambda_p,
    })
}

/// `−λ_p⟨s_a, s_u⟩ − (1−λ_p)⟨s_a, s_v⟩` with cosine similarity.
pub fn similarity_loss(s_a: &[f64], s_u: &[f64], s_v: &[f64], lambda_p: f64) -> Result<f64> {
    check_lambda(lambda_p)?;
    Ok(-lambda_p * cosine_similarity(s_a, s_u)? - (1.0 - lambda_p) * cosine_similarity(s_a, s_v)?)
}

/// Similarity loss plus cross-entropy of the classifier on the anchor
/// against the label of `u`.
pub fn hallucination_loss(h: &Mlp, g: &Mlp, u: &[f64], v: &[f64], target: usize, lambda_p: f64) -> Result<f64> {
    if g.in_dim() != u.len() {
        return shape_err("classifier width does not match the features");
    }
    let s_a = hallucinate(h, u, v)?;
    let logits = g.forward(&Matrix::from_vec(1, s_a.len(), s_a.clone())?)?;
    Ok(similarity_loss(&s_a, u, v, lambda_p)? + softmax_cross_entropy(logits.row(0), Target::Class(target))?)
}

/// Mean hallucination loss over `pairs`, per-pair losses, and the gradient
/// of the mean with respect to the hallucinator.
pub fn hallucination_loss_grad(
    h: &Mlp,
    g: &Mlp,
    easy: &FeatureSet,
    pairs: &[(usize, usize)],
    lambda_p: f64,
) -> Result<(f64, Vec<f64>, Gradients)> {
    check_lambda(lambda_p)?;
    if pairs.is_empty() {
        return validation_err("no pairs");
    }
    let (z, h_trace) = h.forward_traced(&concat_pairs(easy, pairs))?;
    let anchors = normalize_rows(&z);
    let (logits, g_trace) = g.forward_traced(&anchors.unit)?;
    let scale = 1.0 / pairs.len() as f64;
    let d = easy.dim();
    let mut grad_logits = Matrix::zeros(logits.rows(), logits.cols());
    let mut grad_unit = Matrix::zeros(pairs.len(), d);
    let mut per_pair = Vec::with_capacity(pairs.len());
    for (r, &(u, v)) in pairs.iter().enumerate() {
        let a = anchors.unit.row(r);
        let (su, sv) = (easy.features.row(u), easy.features.row(v));
        let sim = -lambda_p * dot(a, su) - (1.0 - lambda_p) * dot(a, sv);
        let (ce, gl) = softmax_cross_entropy_grad(logits.row(r), Target::Class(easy.labels[u]))?;
        per_pair.push(sim + ce);
        grad_logits.row_mut(r).iter_mut().zip(gl).for_each(|(o, x)| *o = x * scale);
        for ((o, a_u), a_v) in grad_unit.row_mut(r).iter_mut().zip(su).zip(sv) {
            *o = -(lambda_p * a_u + (1.0 - lambda_p) * a_v) * scale;
        }
    }
    let (_, grad_from_classifier) = g.backward(&g_trace, &grad_logits)?;
    grad_unit
        .as_mut_slice()
        .iter_mut()
        .zip(grad_from_classifier.as_slice())
        .for_each(|(a, b)| *a += b);
    let grad_z = normalize_rows_backward(&anchors, &grad_unit);
    let (grads, _) = h.backward(&h_trace, &grad_z)?;
    let mean = per_pair.iter().sum::<f64>() * scale;
    Ok((mean, per_pair, grads))
}

/// Train the hallucinator on a fixed set of easy features with the
/// classifier frozen. Pairs are sampled once, then reused every epoch in a
/// fresh order. Returns the mean loss of every epoch.
pub fn train_hallucinator(
    h: &mut Mlp,
    g: &Mlp,
    easy: &FeatureSet,
    cfg: &HallucinatorConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if easy.is_empty() {
        return validation_err("easy set is empty");
    }
    let pairs = sample_pairs(easy, cfg.anchors_per_sample, rng)?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut losses = vec![0.0; pairs.len()];
    for _ in 0..cfg.epochs {
        for batch in batches(pairs.len(), cfg.batch_size, rng) {
            let chosen: Vec<(usize, usize)> = batch.iter().map(|&i| pairs[i]).collect();
            let (_, per_pair, grads) = hallucination_loss_grad(h, g, easy, &chosen, cfg.lambda_p)?;
            for (&i, l) in batch.iter().zip(per_pair) {
                losses[i] = l;
            }
            opt.step(h, &grads)?;
        }
        curve.push(losses.iter().sum::<f64>() / losses.len() as f64);
    }
    Ok(curve)
}

/// Mean cosine similarity over all distinct anchor pairs.
pub fn mean_pairwise_similarity(anchors: &Matrix) -> f64 {
    let n = anchors.rows();
    if n < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += dot(anchors.row(i), anchors.row(j));
        }
    }
    total / (n * (n - 1) / 2) as f64
}
