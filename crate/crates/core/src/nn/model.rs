//! The three networks trained by the pipeline.
//!
//! Samples are embedded by the feature extractor, projected onto the unit
//! sphere and scored by the linear classifier. Anchors produced by the
//! hallucinator live on the same sphere, so the classifier can score them
//! directly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{l2_normalize_backward, softmax};
use super::matrix::{norm, Matrix};
use super::mlp::{Gradients, Mlp, Trace};
use crate::error::{shape_err, Result};

/// Norms below this are treated as this value when normalising.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub extractor: Mlp,
    pub classifier: Mlp,
    pub hallucinator: Mlp,
}

/// Row-normalised matrix plus the norms used.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub unit: Matrix,
    pub norms: Vec<f64>,
}

pub fn normalize_rows(m: &Matrix) -> Normalized {
    let mut unit = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let n = norm(m.row(r)).max(NORM_FLOOR);
        unit.row_mut(r).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Normalized { unit, norms }
}

pub fn normalize_rows_backward(n: &Normalized, grad_unit: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(grad_unit.rows(), grad_unit.cols());
    for r in 0..grad_unit.rows() {
        let g = l2_normalize_backward(n.unit.row(r), n.norms[r], grad_unit.row(r));
        out.row_mut(r).copy_from_slice(&g);
    }
    out
}

/// Recorded forward pass through extractor, normalisation and classifier.
#[derive(Debug, Clone)]
pub struct ClassifierTrace {
    extractor: Trace,
    normalized: Normalized,
    classifier: Trace,
}

#[derive(Debug, Clone)]
pub struct BundleGrads {
    pub extractor: Gradients,
    pub classifier: Gradients,
}

impl ModelBundle {
    /// `extractor_sizes` runs from the input width to the feature width d.
    pub fn new<R: Rng + ?Sized>(
        extractor_sizes: &[usize],
        classes: usize,
        hallucinator_hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let extractor = Mlp::new(extractor_sizes, rng)?;
        let d = extractor.out_dim();
        let classifier = Mlp::new(&[d, classes], rng)?;
        let hallucinator = Mlp::new(&[2 * d, hallucinator_hidden, d], rng)?;
        Self::from_parts(extractor, classifier, hallucinator)
    }

    pub fn from_parts(extractor: Mlp, classifier: Mlp, hallucinator: Mlp) -> Result<Self> {
        let d = extractor.out_dim();
        if classifier.layers().len() != 1 {
            return shape_err("classifier must be a single affine layer");
        }
        if classifier.in_dim() != d {
            return shape_err(format!("classifier expects {} features, extractor emits {d}", classifier.in_dim()));
        }
        if hallucinator.layers().len() != 2 {
            return shape_err("hallucinator must have exactly two layers");
        }
        if hallucinator.in_dim() != 2 * d || hallucinator.out_dim() != d {
            return shape_err(format!(
                "hallucinator maps {} -> {}, expected {} -> {d}",
                hallucinator.in_dim(),
                hallucinator.out_dim(),
                2 * d
            ));
        }
        Ok(Self {
            extractor,
            classifier,
            hallucinator,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.out_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.extractor.in_dim()
    }

    /// Unit-norm features, one row per input.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        Ok(normalize_rows(&self.extractor.forward(x)?).unit)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.classifier.forward(&self.embed(x)?)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = self.logits(x)?;
        for r in 0..z.rows() {
            let p = softmax(z.row(r));
            z.row_mut(r).copy_from_slice(&p);
        }
        Ok(z)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.iter_rows().map(argmax).collect())
    }

    pub fn logits_traced(&self, x: &Matrix) -> Result<(Matrix, ClassifierTrace)> {
        let (raw, extractor) = self.extractor.forward_traced(x)?;
        let normalized = normalize_rows(&raw);
        let (logits, classifier) = self.classifier.forward_traced(&normalized.unit)?;
        Ok((
            logits,
            ClassifierTrace {
                extractor,
                normalized,
                classifier,
            },
        ))
    }

    pub fn backward_logits(&self, trace: &ClassifierTrace, grad_logits: &Matrix) -> Result<BundleGrads> {
        let (classifier, grad_unit) = self.classifier.backward(&trace.classifier, grad_logits)?;
        let grad_raw = normalize_rows_backward(&trace.normalized, &grad_unit);
        let (extractor, _) = self.extractor.backward(&trace.extractor, &grad_raw)?;
        Ok(BundleGrads { extractor, classifier })
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
