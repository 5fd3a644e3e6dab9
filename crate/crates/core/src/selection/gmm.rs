//! Two-component univariate Gaussian mixture fitted by EM.
//!
//! Losses are min-max scaled to [0, 1] before fitting. Means start at the
//! 10th and 90th percentiles with equal weights and the pooled within-group
//! variance. Component 0 is always the smaller-mean component.

use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_ITERS: usize = 200;
pub const TOLERANCE: f64 = 1e-6;

/// Per-sample cross-entropy against the observed labels for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub losses: Vec<f64>,
}

impl LossRecord {
    pub fn new(epoch: usize, losses: Vec<f64>) -> Result<Self> {
        if losses.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return validation_err("losses must be finite and nonnegative");
        }
        Ok(Self { epoch, losses })
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    /// Parameters in the scaled [0, 1] space.
    scaled_means: [f64; 2],
    scaled_vars: [f64; 2],
    pub weights: [f64; 2],
    /// `(min, max)` of the raw losses.
    pub range: (f64, f64),
    /// Scaled losses.
    samples: Vec<f64>,
    /// Posterior of component 0 per sample.
    pub posterior: Vec<f64>,
    pub iterations: usize,
    /// Mean per-sample log-likelihood after each E-step.
    pub log_likelihood_trace: Vec<f64>,
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean) * (x - mean) / var + var.ln() + std::f64::consts::TAU.ln())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Responsibility of component 0 and the log of the mixture density.
fn responsibility(x: f64, means: &[f64; 2], vars: &[f64; 2], weights: &[f64; 2]) -> (f64, f64) {
    let a = weights[0].ln() + log_normal(x, means[0], vars[0]);
    let b = weights[1].ln() + log_normal(x, means[1], vars[1]);
    let m = a.max(b);
    let lse = m + ((a - m).exp() + (b - m).exp()).ln();
    ((a - lse).exp(), lse)
}

impl GmmFit {
    pub fn means(&self) -> [f64; 2] {
        let (lo, hi) = self.range;
        self.scaled_means.map(|m| lo + m * (hi - lo))
    }

    pub fn variances(&self) -> [f64; 2] {
        let (lo, hi) = self.range;
        self.scaled_vars.map(|v| v * (hi - lo) * (hi - lo))
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Posteriors of (component 0, component 1) for a raw loss value.
    pub fn posterior_of(&self, loss: f64) -> (f64, f64) {
        let (lo, hi) = self.range;
        let x = (loss - lo) / (hi - lo);
        let (p, _) = responsibility(x, &self.scaled_means, &self.scaled_vars, &self.weights);
        (p, 1.0 - p)
    }

    /// Easiness of a raw loss value: component-0 posterior evaluated at the
    /// loss clamped to `[mean0, mean1]`.
    pub fn easiness_of(&self, loss: f64) -> f64 {
        let (lo, hi) = self.range;
        self.easiness_scaled((loss - lo) / (hi - lo))
    }

    fn easiness_scaled(&self, x: f64) -> f64 {
        let x = x.clamp(self.scaled_means[0], self.scaled_means[1]);
        responsibility(x, &self.scaled_means, &self.scaled_vars, &self.weights).0
    }
}

pub fn fit_gmm2(record: &LossRecord) -> Result<GmmFit> {
    let raw = &record.losses;
    if raw.len() < 4 {
        return validation_err(format!("need at least 4 losses, got {}", raw.len()));
    }
    if raw.iter().any(|l| !l.is_finite()) {
        return validation_err("non-finite loss");
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Err(Error::DegenerateFit("all losses are identical".into()));
    }
    let x: Vec<f64> = raw.iter().map(|l| (l - lo) / (hi - lo)).collect();
    let n = x.len() as f64;

    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let mut means = [percentile(&sorted, 0.1), percentile(&sorted, 0.9)];
    if means[1] - means[0] < 1e-9 {
        means = [0.0, 1.0];
    }
    let mid = 0.5 * (means[0] + means[1]);
    let pooled = x
        .iter()
        .map(|&v| {
            let m = if v <= mid { means[0] } else { means[1] };
            (v - m) * (v - m)
        })
        .sum::<f64>()
        / n;
    let mut vars = [pooled.max(VARIANCE_FLOOR); 2];
    let mut weights = [0.5, 0.5];

    let mut resp = vec![0.0; x.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        // E-step
        let mut ll = 0.0;
        for (r, &v) in resp.iter_mut().zip(&x) {
            let (p, l) = responsibility(v, &means, &vars, &weights);
            *r = p;
            ll += l;
        }
        let ll = ll / n;
        let converged = trace.last().is_some_and(|&prev: &f64| ll - prev < TOLERANCE);
        trace.push(ll);
        if converged || iterations == MAX_ITERS {
            break;
        }
        // M-step
        let n0: f64 = resp.iter().sum();
        let n1 = n - n0;
        if n0 <= 0.0 || n1 <= 0.0 {
            return Err(Error::DegenerateFit("a mixture component collapsed".into()));
        }
        means[0] = resp.iter().zip(&x).map(|(r, v)| r * v).sum::<f64>() / n0;
        means[1] = resp.iter().zip(&x).map(|(r, v)| (1.0 - r) * v).sum::<f64>() / n1;
        vars[0] = (resp.iter().zip(&x).map(|(r, v)| r * (v - means[0]).powi(2)).sum::<f64>() / n0)
            .max(VARIANCE_FLOOR);
        vars[1] = (resp.iter().zip(&x).map(|(r, v)| (1.0 - r) * (v - means[1]).powi(2)).sum::<f64>() / n1)
            .max(VARIANCE_FLOOR);
        weights = [n0 / n, n1 / n];
        iterations += 1;
    }

    if means[0] > means[1] {
        means.swap(0, 1);
        vars.swap(0, 1);
        weights.swap(0, 1);
        resp.iter_mut().for_each(|r| *r = 1.0 - *r);
    }
    Ok(GmmFit {
        scaled_means: means,
        scaled_vars: vars,
        weights,
        range: (lo, hi),
        samples: x,
        posterior: resp,
        iterations,
        log_likelihood_trace: trace,
    })
}

/// Easiness score of every fitted sample. Non-increasing in loss.
pub fn easiness_scores(fit: &GmmFit) -> Vec<f64> {
    fit.samples.iter().map(|&x| fit.easiness_scaled(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_losses_are_degenerate() {
        let r = LossRecord::new(0, vec![0.3; 10]).unwrap();
        assert!(matches!(fit_gmm2(&r), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn too_few_losses_rejected() {
        let r = LossRecord::new(0, vec![0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(fit_gmm2(&r), Err(Error::Validation(_))));
        assert!(LossRecord::new(0, vec![-1.0]).is_err());
    }

    #[test]
    fn symmetric_bimodal_gives_equal_weights() {
        let mut losses = Vec::new();
        for i in 0..50 {
            let e = (i as f64 - 24.5) * 0.002;
            losses.push(0.2 + e);
            losses.push(1.8 - e);
        }
        let fit = fit_gmm2(&LossRecord::new(0, losses).unwrap()).unwrap();
        assert!((fit.weights[0] - 0.5).abs() < 0.05);
        assert!((fit.weights[0] + fit.weights[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn easiness_of_low_and_equal_losses() {
        let mut losses: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 0.1 + i as f64 * 1e-3 } else { 2.0 + i as f64 * 1e-2 })
            .collect();
        losses.push(1.0);
        losses.push(1.0);
        let fit = fit_gmm2(&LossRecord::new(0, losses).unwrap()).unwrap();
        assert!(fit.easiness_of(0.0) > 0.5);
        let w = easiness_scores(&fit);
        assert_eq!(w[40], w[41]);
        let (a, b) = fit.posterior_of(0.7);
        assert!((a + b - 1.0).abs() < 1e-12);
    }
}
