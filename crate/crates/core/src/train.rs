//! Minibatch cross-entropy training of extractor + classifier.

use rand::seq::SliceRandom;

use crate::error::Result;
use crate::nn::loss::{softmax_cross_entropy, softmax_cross_entropy_grad, Target};
use crate::nn::{Matrix, ModelBundle, Sgd};
use crate::rng::Rng;

/// Optimizer state for the two networks trained jointly.
#[derive(Debug, Clone)]
pub struct ClassifierOptim {
    pub extractor: Sgd,
    pub classifier: Sgd,
}

impl ClassifierOptim {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            extractor: Sgd::new(lr, momentum),
            classifier: Sgd::new(lr, momentum),
        }
    }

    /// Backpropagate per-row logit gradients and take one step on both networks.
    pub fn apply(
        &mut self,
        model: &mut ModelBundle,
        trace: &crate::nn::model::ClassifierTrace,
        grad_logits: &Matrix,
    ) -> Result<()> {
        let grads = model.backward_logits(trace, grad_logits)?;
        self.extractor.step(&mut model.extractor, &grads.extractor)?;
        self.classifier.step(&mut model.classifier, &grads.classifier)?;
        Ok(())
    }
}

/// Shuffled minibatches of `0..n`.
pub fn batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// One epoch of cross-entropy training against hard labels. Returns the
/// mean training loss over the epoch.
pub fn supervised_epoch(
    model: &mut ModelBundle,
    opt: &mut ClassifierOptim,
    inputs: &Matrix,
    labels: &[usize],
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut total = 0.0;
    for batch in batches(inputs.rows(), batch_size, rng) {
        let x = inputs.select_rows(&batch);
        let (logits, trace) = model.logits_traced(&x)?;
        let mut grad = Matrix::zeros(logits.rows(), logits.cols());
        let scale = 1.0 / batch.len() as f64;
        for (r, &i) in batch.iter().enumerate() {
            let (l, g) = softmax_cross_entropy_grad(logits.row(r), Target::Class(labels[i]))?;
            total += l;
            grad.row_mut(r).iter_mut().zip(g).for_each(|(d, v)| *d = v * scale);
        }
        opt.apply(model, &trace, &grad)?;
    }
    Ok(total / inputs.rows().max(1) as f64)
}

/// Per-sample cross-entropy of the current model against `labels`.
pub fn per_sample_losses(model: &ModelBundle, inputs: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    let logits = model.logits(inputs)?;
    logits
        .iter_rows()
        .zip(labels)
        .map(|(z, &y)| softmax_cross_entropy(z, Target::Class(y)))
        .collect()
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(model: &ModelBundle, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let pred = model.predict(inputs)?;
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}
