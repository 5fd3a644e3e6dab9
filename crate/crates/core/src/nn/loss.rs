//! Losses and their gradients with respect to logits.

use super::matrix::{dot, norm};
use crate::error::{shape_err, validation_err, Error, Result};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Training target for one sample.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Class(usize),
    Dist(&'a [f64]),
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| (z - lse).max(PROB_FLOOR.ln())).collect()
}

/// Check that `p` is a probability vector (nonnegative, sums to 1 within 1e-6).
pub fn check_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return validation_err("distribution has negative or non-finite entries");
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return validation_err(format!("distribution sums to {s}, not 1"));
    }
    Ok(())
}

fn check_target(target: Target<'_>, classes: usize) -> Result<()> {
    match target {
        Target::Class(k) if k >= classes => {
            validation_err(format!("class {k} out of range for {classes} logits"))
        }
        Target::Class(_) => Ok(()),
        Target::Dist(p) => {
            if p.len() != classes {
                return shape_err(format!("target has {} entries, logits {classes}", p.len()));
            }
            check_distribution(p)
        }
    }
}

/// `−Σ_c target_c · log softmax(logits)_c`.
pub fn softmax_cross_entropy(logits: &[f64], target: Target<'_>) -> Result<f64> {
    check_target(target, logits.len())?;
    let logp = log_softmax(logits);
    Ok(match target {
        Target::Class(k) => -logp[k],
        Target::Dist(p) => -p.iter().zip(&logp).map(|(t, l)| t * l).sum::<f64>(),
    })
}

/// Cross-entropy value and its gradient `softmax(logits) − target`.
pub fn softmax_cross_entropy_grad(logits: &[f64], target: Target<'_>) -> Result<(f64, Vec<f64>)> {
    let loss = softmax_cross_entropy(logits, target)?;
    let mut grad = softmax(logits);
    match target {
        Target::Class(k) => grad[k] -= 1.0,
        Target::Dist(p) => grad.iter_mut().zip(p).for_each(|(g, t)| *g -= t),
    }
    Ok((loss, grad))
}

/// Mean of squared componentwise differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return shape_err(format!("mse over lengths {} and {}", pred.len(), target.len()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// `mse(softmax(logits), target)` and its gradient with respect to the logits.
pub fn softmax_mse_grad(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = softmax(logits);
    let loss = mse_loss(&p, target)?;
    let c = p.len() as f64;
    let dp: Vec<f64> = p.iter().zip(target).map(|(pi, ti)| 2.0 * (pi - ti) / c).collect();
    let inner = dot(&p, &dp);
    let grad = p.iter().zip(&dp).map(|(pi, gi)| pi * (gi - inner)).collect();
    Ok((loss, grad))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return shape_err(format!("cosine over lengths {} and {}", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Unit vector and the original norm; `None` for a zero vector.
pub fn l2_normalize(v: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some((v.iter().map(|x| x / n).collect(), n))
}

/// Given `u = v/‖v‖` and dL/du, return dL/dv.
pub fn l2_normalize_backward(unit: &[f64], norm: f64, grad_unit: &[f64]) -> Vec<f64> {
    let proj = dot(unit, grad_unit);
    unit.iter()
        .zip(grad_unit)
        .map(|(u, g)| (g - u * proj) / norm)
        .collect()
}
