#![allow(dead_code)]

pub mod criteria;
pub mod fixtures;

use nll_core::hallucinator::{hallucination_loss, hallucination_loss_grad, FeatureSet, Role};
use nll_core::nn::loss::{softmax_cross_entropy, softmax_cross_entropy_grad, softmax_mse_grad, Target};
use nll_core::nn::{Dense, Gradients, Matrix, Mlp, ModelBundle};
use nll_core::rng::{self, Rng};
use nll_core::ssl::{build_batch, ssl_loss, LabelSource, LabeledSample, SslConfig};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

/// Entry-wise agreement between analytic and central-difference gradients.
#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub passed: usize,
    pub total: usize,
    pub worst: f64,
}

impl FdReport {
    pub fn fraction(&self) -> f64 {
        self.passed as f64 / self.total.max(1) as f64
    }

    pub fn merge(self, other: FdReport) -> FdReport {
        FdReport {
            passed: self.passed + other.passed,
            total: self.total + other.total,
            worst: self.worst.max(other.worst),
        }
    }
}

fn agree(analytic: f64, numeric: f64) -> (bool, f64) {
    let diff = (analytic - numeric).abs();
    let rel = diff / analytic.abs().max(numeric.abs()).max(1e-300);
    (diff <= ABS_FLOOR || rel <= REL_TOL, if diff <= ABS_FLOOR { 0.0 } else { rel })
}

/// Compare `grads` against central differences of `loss` over every
/// parameter of the network selected by `pick`.
pub fn fd_check<T: Clone>(
    subject: &T,
    pick: impl Fn(&mut T) -> &mut Mlp,
    grads: &Gradients,
    loss: impl Fn(&T) -> f64,
) -> FdReport {
    let mut work = subject.clone();
    let analytic: Vec<f64> = grads.slices().into_iter().flatten().copied().collect();
    let mut report = FdReport::default();
    let mut flat = 0;
    let n_slices = pick(&mut work).param_slices().len();
    for s in 0..n_slices {
        let len = pick(&mut work).param_slices()[s].len();
        for e in 0..len {
            let orig = pick(&mut work).param_slices()[s][e];
            pick(&mut work).param_slices_mut()[s][e] = orig + STEP;
            let up = loss(&work);
            pick(&mut work).param_slices_mut()[s][e] = orig - STEP;
            let down = loss(&work);
            pick(&mut work).param_slices_mut()[s][e] = orig;
            let (ok, rel) = agree(analytic[flat], (up - down) / (2.0 * STEP));
            report.total += 1;
            report.passed += ok as usize;
            report.worst = report.worst.max(rel);
            flat += 1;
        }
    }
    report
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let v = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, v).unwrap()
}

/// Small model with random biases so that no bias gradient is trivially zero.
pub fn small_model(seed: u64) -> ModelBundle {
    let mut r = rng::from_seed(seed);
    let mut m = ModelBundle::new(&[6, 8, 7, 5], 3, 9, &mut r).unwrap();
    for net in [&mut m.extractor, &mut m.classifier, &mut m.hallucinator] {
        for layer in net.layers_mut() {
            layer.bias.iter_mut().for_each(|b| *b = r.random_range(-0.3..0.3));
        }
    }
    m
}

pub fn random_labels(n: usize, classes: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect()
}

pub fn random_dists(n: usize, classes: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(n, classes);
    for r in 0..n {
        let row = m.row_mut(r);
        row.iter_mut().for_each(|v| *v = rng.random_range(0.05..1.0));
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

fn mean_ce(m: &ModelBundle, x: &Matrix, y: &[usize]) -> f64 {
    let logits = m.logits(x).unwrap();
    logits
        .iter_rows()
        .zip(y)
        .map(|(z, &c)| softmax_cross_entropy(z, Target::Class(c)).unwrap())
        .sum::<f64>()
        / y.len() as f64
}

fn mean_mse(m: &ModelBundle, x: &Matrix, t: &Matrix) -> f64 {
    let logits = m.logits(x).unwrap();
    (0..t.rows()).map(|r| softmax_mse_grad(logits.row(r), t.row(r)).unwrap().0).sum::<f64>() / t.rows() as f64
}

/// Extractor and classifier gradients of a logit-level loss.
fn bundle_grads(m: &ModelBundle, x: &Matrix, row_grad: impl Fn(usize, &[f64]) -> Vec<f64>) -> (Gradients, Gradients) {
    let (logits, trace) = m.logits_traced(x).unwrap();
    let mut g = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let v = row_grad(r, logits.row(r));
        g.row_mut(r).copy_from_slice(&v);
    }
    let b = m.backward_logits(&trace, &g).unwrap();
    (b.extractor, b.classifier)
}

fn check_bundle(m: &ModelBundle, grads: (Gradients, Gradients), loss: impl Fn(&ModelBundle) -> f64) -> (FdReport, FdReport) {
    (
        fd_check(m, |m| &mut m.extractor, &grads.0, &loss),
        fd_check(m, |m| &mut m.classifier, &grads.1, &loss),
    )
}

/// Cross-entropy on hard labels: (extractor, classifier) reports.
pub fn ce_reports(seed: u64) -> (FdReport, FdReport) {
    let m = small_model(seed);
    let mut r = rng::stream(seed, "fd-ce", 0);
    let x = gaussian(7, 6, &mut r);
    let y = random_labels(7, 3, &mut r);
    let n = y.len() as f64;
    let grads = bundle_grads(&m, &x, |row, z| {
        softmax_cross_entropy_grad(z, Target::Class(y[row])).unwrap().1.into_iter().map(|v| v / n).collect()
    });
    check_bundle(&m, grads, |m| mean_ce(m, &x, &y))
}

/// Squared error between softmax outputs and target distributions.
pub fn mse_reports(seed: u64) -> (FdReport, FdReport) {
    let m = small_model(seed);
    let mut r = rng::stream(seed, "fd-mse", 0);
    let x = gaussian(7, 6, &mut r);
    let t = random_dists(7, 3, &mut r);
    let n = t.rows() as f64;
    let grads = bundle_grads(&m, &x, |row, z| {
        softmax_mse_grad(z, t.row(row)).unwrap().1.into_iter().map(|v| v / n).collect()
    });
    check_bundle(&m, grads, |m| mean_mse(m, &x, &t))
}

/// The combined semi-supervised loss on a freshly built mixed batch.
pub fn ssl_reports(seed: u64) -> (FdReport, FdReport) {
    let m = small_model(seed);
    let mut r = rng::stream(seed, "fd-ssl", 0);
    let inputs = gaussian(12, 6, &mut r);
    let labeled: Vec<LabeledSample> = (0..5)
        .map(|i| LabeledSample {
            index: i,
            label: i % 3,
            source: LabelSource::Easy { omega: 0.2 + 0.15 * i as f64 },
        })
        .collect();
    let unlabeled: Vec<usize> = (5..12).collect();
    let cfg = SslConfig::default();
    let batch = build_batch(&m, &inputs, &labeled, &unlabeled, &[0.1; 6], &cfg, &mut r).unwrap();
    let lambda = 0.7;
    let (_, grads) = ssl_loss(&m, &batch, lambda).unwrap();
    check_bundle(&m, (grads.extractor, grads.classifier), |m| ssl_loss(m, &batch, lambda).unwrap().0.total)
}

fn easy_features(seed: u64, d: usize) -> FeatureSet {
    let mut r = rng::stream(seed, "fd-easy", 0);
    let f = gaussian(8, d, &mut r);
    let labels = (0..8).map(|i| i % 3).collect();
    FeatureSet::from_parts(f, (0..8).collect(), labels, Role::Easy).unwrap()
}

fn hal_report(seed: u64, classifier: &Mlp, lambda_p: f64) -> FdReport {
    let m = small_model(seed);
    let easy = easy_features(seed, m.feature_dim());
    let pairs = vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 7), (6, 1)];
    let (_, _, grads) = hallucination_loss_grad(&m.hallucinator, classifier, &easy, &pairs, lambda_p).unwrap();
    let loss = |h: &Mlp| {
        pairs
            .iter()
            .map(|&(u, v)| {
                hallucination_loss(h, classifier, easy.features.row(u), easy.features.row(v), easy.labels[u], lambda_p).unwrap()
            })
            .sum::<f64>()
            / pairs.len() as f64
    };
    fd_check(&m.hallucinator, |h| h, &grads, loss)
}

/// Similarity term alone: with an all-zero classifier the cross-entropy
/// term is the constant ln C.
pub fn sim_report(seed: u64) -> FdReport {
    let m = small_model(seed);
    let zero = Mlp::from_layers(vec![Dense::zeros(m.feature_dim(), 3)]).unwrap();
    hal_report(seed, &zero, 0.8)
}

/// Full hallucination loss against a random frozen classifier.
pub fn hal_report_full(seed: u64) -> FdReport {
    let m = small_model(seed);
    hal_report(seed, &m.classifier, 0.75)
}

/// Gradients equal to `factor` times the network's own parameters.
pub fn scaled_params(net: &Mlp, factor: f64) -> Gradients {
    let mut g = Gradients {
        layers: net.layers().to_vec(),
    };
    g.scale(factor);
    g
}
