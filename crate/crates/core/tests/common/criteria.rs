//! Acceptance checks shared by the acceptance target and the per-area tests.

use nll_core::correction::{correct_hard, majority_vote, CorrectionConfig, ValidRepresentative, Vote};
use nll_core::data::noise::{probe_confusion, top_wrong_class, DEFAULT_PROBE_EPOCHS};
use nll_core::data::{inject_classification_based, inject_feature_dependent, inject_symmetric, noise_rate, BlobGenerator, BlobSpec, Split};
use nll_core::hallucinator::{
    hallucinate, hallucinate_pairs, mean_pairwise_similarity, sample_pairs, train_hallucinator, AnchorSet, FeatureSet,
    HallucinatorConfig, Role,
};
use nll_core::nn::matrix::dot;
use nll_core::nn::{Matrix, ModelBundle};
use nll_core::pipeline::{build_data, run_experiment, MemorySink, Mode, RunConfig};
use nll_core::rng;
use nll_core::selection::{class_balanced_split, easiness_scores, fit_gmm2, LossRecord};
use nll_core::train::{supervised_epoch, ClassifierOptim};
use rand::Rng as _;

use super::fixtures::{labelled, planted_mixture, quota_oracle};
use super::{ce_reports, hal_report_full, mse_reports, sim_report, ssl_reports, FdReport};

#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

pub const FD_SEEDS: [u64; 5] = [11, 23, 37, 41, 59];

/// Analytic against finite-difference gradients for every (loss, network)
/// pair that has a gradient path, on each seed separately.
pub fn gradients() -> Check {
    let mut worst: Option<(String, FdReport)> = None;
    let mut combos = 0;
    let mut note = |name: String, r: FdReport| {
        combos += 1;
        if worst.as_ref().is_none_or(|(_, w)| r.fraction() < w.fraction()) {
            worst = Some((name, r));
        }
    };
    for seed in FD_SEEDS {
        for (loss, (f, g)) in [("ce", ce_reports(seed)), ("mse", mse_reports(seed)), ("ssl", ssl_reports(seed))] {
            note(format!("{loss}/f seed {seed}"), f);
            note(format!("{loss}/g seed {seed}"), g);
        }
        note(format!("sim/h seed {seed}"), sim_report(seed));
        note(format!("hal/h seed {seed}"), hal_report_full(seed));
    }
    let (name, w) = worst.expect("at least one combination");
    Check::new(
        w.fraction() >= 0.99,
        format!(
            "{combos} loss/network/seed combinations; lowest agreement {:.4} ({}/{}) at {name}",
            w.fraction(),
            w.passed,
            w.total
        ),
    )
}

/// Per-class easy counts on random label layouts, P = 60 first.
pub fn quota_exactness() -> Check {
    let mut r = rng::stream(2024, "quota-acceptance", 0);
    let mut failures = Vec::new();
    for case in 0..50 {
        let classes = r.random_range(2..=10);
        let percent = if case < 5 { 60 } else { r.random_range(1..=100) };
        let counts: Vec<usize> = (0..classes).map(|_| r.random_range(1..=400)).collect();
        let ds = labelled(&counts, &mut r);
        let omega: Vec<f64> = (0..ds.len()).map(|_| r.random::<f64>()).collect();
        let split = class_balanced_split(&ds, &omega, percent as f64).expect("valid split");
        let expected: Vec<usize> = counts.iter().map(|&t| quota_oracle(ds.len(), classes, percent, t)).collect();
        if split.easy_counts != expected {
            failures.push(format!("case {case}: got {:?}, want {expected:?}", split.easy_counts));
        }
    }
    let first = failures.first().map(|f| format!(", first {f}")).unwrap_or_default();
    Check::new(failures.is_empty(), format!("50 configurations, {} mismatches{first}", failures.len()))
}

pub fn gmm_oracle() -> Check {
    let mut r = rng::stream(5, "gmm-acceptance", 0);
    let (x, from0) = planted_mixture(2000, [0.05, 2.0], [0.02, 0.2], 0.5, &mut r);
    let fit = match fit_gmm2(&LossRecord::new(0, x).expect("non-negative losses")) {
        Ok(f) => f,
        Err(e) => return Check::new(false, format!("fit failed: {e}")),
    };
    let [m0, m1] = fit.means();
    let omega = easiness_scores(&fit);
    let small: Vec<f64> = omega.iter().zip(&from0).filter(|(_, &s)| s).map(|(&w, _)| w).collect();
    let frac = small.iter().filter(|&&w| w > 0.9).count() as f64 / small.len() as f64;
    let monotone = fit.log_likelihood_trace.windows(2).all(|w| w[1] >= w[0]);
    let pass = (m0 - 0.05).abs() <= 0.1 && (m1 - 2.0).abs() <= 0.1 && frac >= 0.95 && monotone;
    Check::new(
        pass,
        format!(
            "means {m0:.4}/{m1:.4}, easiness > 0.9 on {:.2}% of small component, {} iterations, log-likelihood monotone {monotone}",
            100.0 * frac,
            fit.iterations
        ),
    )
}

fn tally(reps: &[ValidRepresentative]) -> Option<Vote> {
    if reps.is_empty() {
        return None;
    }
    let mut best: Option<(usize, f64, usize)> = None;
    for label in 0..8 {
        let count = reps.iter().filter(|r| r.label == label).count();
        if count == 0 {
            continue;
        }
        let sim: f64 = reps.iter().filter(|r| r.label == label).map(|r| r.similarity).sum();
        if best.is_none_or(|(c, s, _)| count > c || (count == c && sim > s)) {
            best = Some((count, sim, label));
        }
    }
    best.map(|(count, _, label)| Vote {
        label,
        confidence: count as f64 / reps.len() as f64,
    })
}

/// Every label sequence of length 1..=5 over 1..=4 classes, with equal and
/// with distinct (exactly summable) similarities.
pub fn voting_oracle() -> Check {
    let sims = [0.5, 0.75, 0.625, 0.875, 0.5];
    let (mut checked, mut ties, mut wrong) = (0, 0, 0);
    for classes in 1..=4usize {
        for len in 1..=5u32 {
            for code in 0..classes.pow(len) {
                let mut c = code;
                let labels: Vec<usize> = (0..len)
                    .map(|_| {
                        let l = c % classes;
                        c /= classes;
                        l
                    })
                    .collect();
                let mut counts = [0; 4];
                labels.iter().for_each(|&l| counts[l] += 1);
                let top = *counts.iter().max().unwrap();
                ties += usize::from(counts.iter().filter(|&&n| n == top).count() > 1);
                for distinct in [false, true] {
                    let reps: Vec<ValidRepresentative> = labels
                        .iter()
                        .enumerate()
                        .map(|(i, &label)| ValidRepresentative {
                            anchor: i,
                            hard_row: 0,
                            similarity: if distinct { sims[i] } else { 0.9 },
                            label,
                        })
                        .collect();
                    checked += 1;
                    wrong += usize::from(majority_vote(&reps) != tally(&reps));
                }
            }
        }
    }
    Check::new(wrong == 0, format!("{checked} label multisets ({ties} with count ties), {wrong} disagreements"))
}

fn unit(v: [f64; 3]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Hard samples on the axes, anchors placed by hand; see the correction tests
/// for the per-anchor reasoning.
pub fn geometric_correction() -> Check {
    let hard = FeatureSet::from_parts(
        Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![-1.0, 0.0, 0.0],
        ])
        .unwrap(),
        vec![100, 101, 102, 103],
        vec![2, 0, 2, 0],
        Role::Hard,
    )
    .unwrap();
    let true_labels = [0, 1, 2, 0];
    let placed: [([f64; 3], usize); 9] = [
        ([0.99, 0.14, 0.0], 0),
        ([0.98, 0.0, 0.2], 0),
        ([0.95, 0.3, 0.0], 1),
        ([0.1, 0.99, 0.0], 1),
        ([0.0, 0.97, 0.24], 1),
        ([0.6, 0.6, 0.53], 2),
        ([0.0, 0.7, 0.7], 0),
        ([0.0, 0.14, 0.99], 2),
        ([0.14, 0.0, 0.99], 1),
    ];
    let anchors = AnchorSet {
        anchors: Matrix::from_rows(&placed.iter().map(|(v, _)| unit(*v)).collect::<Vec<_>>()).unwrap(),
        targets: placed.iter().map(|&(_, l)| l).collect(),
        sources: vec![(0, 0); placed.len()],
        lambda_p: 0.75,
    };
    let cfg = CorrectionConfig {
        lambda_conf: 0.8,
        k: 10,
        min_confidence: 0.5,
    };
    let res = match correct_hard(&anchors, &hard, &cfg) {
        Ok(r) => r,
        Err(e) => return Check::new(false, e.to_string()),
    };
    let got: Vec<(usize, usize)> = res.corrected.iter().map(|c| (c.index, c.label)).collect();
    let all_right = res.corrected.iter().all(|c| c.label == true_labels[c.index - 100]);
    let pass = got == [(100, 0), (101, 1)] && res.residual == [102, 103] && all_right;
    Check::new(pass, format!("corrected {got:?}, residual {:?}", res.residual))
}

/// Hallucinator trained on frozen features of a blob training set, measured
/// on pairs drawn from a held-out split.
pub fn hallucinator_behaviour() -> Check {
    let generator = BlobGenerator::new(BlobSpec::new(4, 16, 0.75), 31).unwrap();
    let train = generator.sample(250, Split::Train).unwrap();
    let held = generator.sample(50, Split::Val).unwrap();
    let mut init = rng::stream(31, "hal-model", 0);
    let mut model = ModelBundle::new(&[16, 32, 16], 4, 32, &mut init).unwrap();
    let mut opt = ClassifierOptim::new(0.05, 0.9);
    let mut order = rng::stream(31, "hal-warmup", 0);
    for _ in 0..10 {
        supervised_epoch(&mut model, &mut opt, &train.inputs, &train.true_labels, 64, &mut order).unwrap();
    }
    let all: Vec<usize> = (0..train.len()).collect();
    let easy = FeatureSet::embed(&model, &train.inputs, &train.true_labels, &all, Role::Easy).unwrap();
    let held_idx: Vec<usize> = (0..held.len()).collect();
    let held_set = FeatureSet::embed(&model, &held.inputs, &held.true_labels, &held_idx, Role::Easy).unwrap();
    let frozen = (model.extractor.digest(), model.classifier.digest());

    let cfg = HallucinatorConfig {
        lambda_p: 0.9,
        ..HallucinatorConfig::default()
    };
    let mut r = rng::stream(31, "hal-train", 0);
    train_hallucinator(&mut model.hallucinator, &model.classifier, &easy, &cfg, &mut r).unwrap();
    if frozen != (model.extractor.digest(), model.classifier.digest()) {
        return Check::new(false, "feature extractor or classifier changed");
    }

    let mut pr = rng::stream(31, "hal-heldout", 0);
    let pairs = sample_pairs(&held_set, 4, &mut pr).unwrap();
    let closer_to_u = pairs
        .iter()
        .filter(|&&(u, v)| {
            let (su, sv) = (held_set.features.row(u), held_set.features.row(v));
            let sa = hallucinate(&model.hallucinator, su, sv).unwrap();
            dot(&sa, su) > dot(&sa, sv)
        })
        .count();
    let frac = closer_to_u as f64 / pairs.len() as f64;
    let anchors = hallucinate_pairs(&model.hallucinator, &held_set, &pairs, cfg.lambda_p).unwrap();
    let spread = mean_pairwise_similarity(&anchors.anchors);
    Check::new(
        frac >= 0.9 && spread < 0.999,
        format!("{:.2}% of {} held-out pairs closer to u, mean pairwise anchor similarity {spread:.4}", 100.0 * frac, pairs.len()),
    )
}

/// Mean of the per-seed values.
fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone)]
pub struct Comparative {
    pub baseline: Vec<f64>,
    pub easy_only: Vec<f64>,
    pub full: Vec<f64>,
    /// End-of-training accuracy, baseline / easy-only / full per seed.
    pub last_epoch: Vec<[f64; 3]>,
    /// Correct fraction of relabelled hard samples, per full-mode seed.
    pub correction_precision: Vec<f64>,
    /// Fraction of hard samples whose observed label is already right.
    pub hard_clean_rate: Vec<f64>,
}

/// Clean-test accuracy of the best-validation model for every mode and seed.
pub fn comparative_runs(base: &RunConfig, seeds: &[u64]) -> Comparative {
    let mut out = Comparative {
        baseline: vec![],
        easy_only: vec![],
        full: vec![],
        last_epoch: vec![],
        correction_precision: vec![],
        hard_clean_rate: vec![],
    };
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let data = build_data(&cfg).unwrap();
        let mut last = [0.0; 3];
        for (m, mode) in [Mode::Baseline, Mode::EasyOnly, Mode::Full].into_iter().enumerate() {
            let mut cfg = cfg.clone();
            cfg.mode = mode;
            let outcome = run_experiment(&cfg, &data, &mut MemorySink::default()).unwrap();
            let acc = outcome.summary.test_accuracy;
            last[m] = outcome.summary.final_test_accuracy;
            match mode {
                Mode::Baseline => out.baseline.push(acc),
                Mode::EasyOnly => out.easy_only.push(acc),
                Mode::Full => {
                    out.full.push(acc);
                    let phase = outcome.last_phase.expect("full mode runs a classification phase");
                    let correction = phase.correction.expect("full mode corrects");
                    out.correction_precision.push(correction.accuracy(&data.train).unwrap_or(0.0));
                    let hard = &phase.split.hard;
                    let clean = hard.iter().filter(|&&i| data.train.noisy_labels[i] == data.train.true_labels[i]).count();
                    out.hard_clean_rate.push(clean as f64 / hard.len().max(1) as f64);
                }
            }
        }
        out.last_epoch.push(last);
    }
    out
}

pub fn comparative(base: &RunConfig, seeds: &[u64]) -> Check {
    let c = comparative_runs(base, seeds);
    let (b, e, f) = (mean(&c.baseline), mean(&c.easy_only), mean(&c.full));
    let (p, h) = (mean(&c.correction_precision), mean(&c.hard_clean_rate));
    let pass = b < e && e < f && f >= b + 0.03 && p > h;
    let last: Vec<f64> = (0..3).map(|m| mean(&c.last_epoch.iter().map(|r| r[m]).collect::<Vec<_>>())).collect();
    Check::new(
        pass,
        format!(
            "best-val test accuracy baseline {:.2}% / easy-only {:.2}% / full {:.2}% (full - baseline {:+.2} pp); \
             last epoch {:.2}% / {:.2}% / {:.2}%; correction precision {:.2}% vs hard clean rate {:.2}%",
            100.0 * b,
            100.0 * e,
            100.0 * f,
            100.0 * (f - b),
            100.0 * last[0],
            100.0 * last[1],
            100.0 * last[2],
            100.0 * p,
            100.0 * h
        ),
    )
}

pub fn noise_contracts() -> Check {
    let generator = BlobGenerator::new(BlobSpec::new(4, 16, 0.75), 77).unwrap();
    let ds = generator.sample(500, Split::Train).unwrap();
    let n = ds.len();
    let mut problems = Vec::new();

    for rate in [0.2, 0.4, 0.45] {
        let got = noise_rate(&inject_symmetric(&ds, rate, 3).unwrap());
        let want = (rate * n as f64).round() / n as f64;
        if got != want {
            problems.push(format!("symmetric r {rate}: {got} != {want}"));
        }
    }
    let mut fd_worst: f64 = 0.0;
    for seed in 0..5 {
        let got = noise_rate(&inject_feature_dependent(&ds, 0.4, 4, seed).unwrap());
        fd_worst = fd_worst.max((got - 0.4).abs());
    }
    if fd_worst > 0.03 {
        problems.push(format!("feature-dependent off by {fd_worst}"));
    }
    let cb = inject_classification_based(&ds, 0.4, DEFAULT_PROBE_EPOCHS, 8).unwrap();
    let probe = probe_confusion(&ds, DEFAULT_PROBE_EPOCHS, 8).unwrap();
    let flipped: Vec<usize> = (0..n).filter(|&i| cb.noisy_labels[i] != ds.true_labels[i]).collect();
    if flipped.len() != (0.4 * n as f64).round() as usize {
        problems.push(format!("classification-based flipped {}", flipped.len()));
    }
    let off_argmax = flipped
        .iter()
        .filter(|&&i| cb.noisy_labels[i] != top_wrong_class(probe.row(i), ds.true_labels[i]).0)
        .count();
    if off_argmax > 0 {
        problems.push(format!("{off_argmax} classification-based flips off the probe argmax"));
    }
    Check::new(
        problems.is_empty(),
        if problems.is_empty() {
            format!("symmetric exact, feature-dependent max deviation {fd_worst:.4}, classification-based {} flips all to probe argmax", flipped.len())
        } else {
            problems.join("; ")
        },
    )
}
