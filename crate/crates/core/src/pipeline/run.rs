//! Warm-up followed by alternating classification and hallucinator phases.

use std::time::Instant;

use super::config::{Mode, RunConfig};
use super::metrics::{EpochMetrics, MetricsSink, Phase, Record, Summary, Timing};
use crate::correction::{correct_hard, CorrectionResult};
use crate::data::{inject, noise_rate, BlobGenerator, Dataset, Split};
use crate::error::{validation_err, Error, Result};
use crate::hallucinator::{hallucinate_pairs, sample_pairs, train_hallucinator, AnchorSet, FeatureSet, Role};
use crate::nn::{Checkpoint, Matrix, ModelBundle};
use crate::rng::{self, derive_seed, Rng};
use crate::selection::{
    class_balanced_split, easiness_scores, fit_gmm2, selection_quality, threshold_split, EasySplit, LossRecord,
    SelectionQuality,
};
use crate::ssl::{ssl_epoch, LabelSource, LabeledSample};
use crate::train::{accuracy, per_sample_losses, supervised_epoch, ClassifierOptim};

/// Train, validation and test splits of one experiment. Only the training
/// split carries label noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Synthesise the three splits described by the config.
pub fn build_data(cfg: &RunConfig) -> Result<ExperimentData> {
    let gen = BlobGenerator::new(cfg.data.blob_spec(), derive_seed(cfg.seed, "data", 0))?;
    let clean = gen.sample(cfg.data.train_per_class, Split::Train)?;
    let train = inject(&clean, &cfg.noise, derive_seed(cfg.seed, "noise", 0))?;
    Ok(ExperimentData {
        train,
        val: gen.sample(cfg.data.val_per_class, Split::Val)?,
        test: gen.sample(cfg.data.test_per_class, Split::Test)?,
    })
}

/// Argmax accuracy against the true labels.
pub fn evaluate(model: &ModelBundle, ds: &Dataset) -> Result<f64> {
    accuracy(model, &ds.inputs, &ds.true_labels)
}

/// Population standard deviation of every input column.
pub fn feature_std(inputs: &Matrix) -> Vec<f64> {
    let (n, d) = inputs.shape();
    let mut mean = vec![0.0; d];
    for row in inputs.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x / n as f64);
    }
    let mut var = vec![0.0; d];
    for row in inputs.iter_rows() {
        for j in 0..d {
            var[j] += (row[j] - mean[j]).powi(2) / n as f64;
        }
    }
    var.into_iter().map(f64::sqrt).collect()
}

/// Everything one classification phase produced.
#[derive(Debug, Clone)]
pub struct ClassificationArtifacts {
    pub losses: LossRecord,
    pub split: EasySplit,
    pub quality: SelectionQuality,
    pub anchors: Option<AnchorSet>,
    pub correction: Option<CorrectionResult>,
    pub labeled: Vec<LabeledSample>,
    pub unlabeled: Vec<usize>,
    pub epoch_losses: Vec<f64>,
}

impl ClassificationArtifacts {
    /// Fraction of labelled samples whose training label is wrong.
    pub fn labeled_noise_rate(&self, ds: &Dataset) -> f64 {
        if self.labeled.is_empty() {
            return 0.0;
        }
        let wrong = self.labeled.iter().filter(|s| ds.true_labels[s.index] != s.label).count();
        wrong as f64 / self.labeled.len() as f64
    }
}

fn check_partition(n: usize, first: impl Iterator<Item = usize>, second: impl Iterator<Item = usize>, what: &str) -> Result<()> {
    let mut seen = vec![0u8; n];
    for i in first.chain(second) {
        if i >= n {
            return Err(Error::Validation(format!("{what}: index {i} out of range")));
        }
        seen[i] += 1;
    }
    if seen.iter().any(|&s| s != 1) {
        return Err(Error::Validation(format!("{what} is not a disjoint cover of the training set")));
    }
    Ok(())
}

/// Mutable state of a run.
pub struct Experiment<'a> {
    pub cfg: &'a RunConfig,
    pub data: &'a ExperimentData,
    pub model: ModelBundle,
    opt: ClassifierOptim,
    sigma: Vec<f64>,
    epoch: usize,
    ssl_epochs: usize,
    noise_rate: f64,
    best: Option<(f64, usize, ModelBundle)>,
}

impl<'a> Experiment<'a> {
    pub fn new(cfg: &'a RunConfig, data: &'a ExperimentData) -> Result<Self> {
        cfg.validate()?;
        if data.train.input_dim() != cfg.data.input_dim || data.train.classes != cfg.data.classes {
            return validation_err("data does not match the configured input width and class count");
        }
        let mut init = rng::stream(cfg.seed, "model-init", 0);
        let model = ModelBundle::new(&cfg.extractor_sizes(), cfg.data.classes, cfg.hallucinator_hidden(), &mut init)?;
        let sigma = feature_std(&data.train.inputs).into_iter().map(|s| s * cfg.ssl.jitter).collect();
        Ok(Self {
            cfg,
            data,
            model,
            opt: ClassifierOptim::new(cfg.train.lr, cfg.train.momentum),
            sigma,
            epoch: 0,
            ssl_epochs: 0,
            noise_rate: noise_rate(&data.train),
            best: None,
        })
    }

    /// Epochs recorded so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn emit(&mut self, mut m: EpochMetrics, evaluate_model: bool, started: Instant, sink: &mut dyn MetricsSink) -> Result<()> {
        if evaluate_model {
            let val = evaluate(&self.model, &self.data.val)?;
            m.val_accuracy = Some(val);
            m.test_accuracy = Some(evaluate(&self.model, &self.data.test)?);
            if self.best.as_ref().is_none_or(|(b, _, _)| val > *b) {
                self.best = Some((val, m.epoch, self.model.clone()));
            }
        }
        sink.record(&Record::Epoch(m.clone()))?;
        sink.timing(&Timing {
            epoch: m.epoch,
            phase: m.phase,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Cross-entropy on every noisy label. Returns the per-sample losses of
    /// the trained model.
    pub fn warmup(&mut self, sink: &mut dyn MetricsSink) -> Result<LossRecord> {
        let mut rng = rng::stream(self.cfg.seed, "warmup", 0);
        for _ in 0..self.cfg.train.warmup_epochs {
            let started = Instant::now();
            let loss = self.supervised(&mut rng)?;
            self.epoch += 1;
            let m = EpochMetrics::new(self.epoch, 0, Phase::Warmup, loss, self.noise_rate);
            self.emit(m, true, started, sink)?;
        }
        self.loss_record()
    }

    fn supervised(&mut self, rng: &mut Rng) -> Result<f64> {
        let ds = &self.data.train;
        supervised_epoch(&mut self.model, &mut self.opt, &ds.inputs, &ds.noisy_labels, self.cfg.train.batch_size, rng)
    }

    fn loss_record(&self) -> Result<LossRecord> {
        let ds = &self.data.train;
        LossRecord::new(self.epoch, per_sample_losses(&self.model, &ds.inputs, &ds.noisy_labels)?)
    }

    /// Easy selection, anchor hallucination, hard-sample correction and
    /// semi-supervised training, with the hallucinator frozen. Steps that
    /// the configured mode leaves out are skipped.
    pub fn classification_phase(&mut self, outer: usize, sink: &mut dyn MetricsSink) -> Result<ClassificationArtifacts> {
        let cfg = self.cfg;
        let ds = &self.data.train;
        let mut rng = rng::stream(cfg.seed, "classification", outer as u64);
        let frozen = self.model.hallucinator.digest();

        let losses = self.loss_record()?;
        let fit = fit_gmm2(&losses)?;
        let omega = easiness_scores(&fit);
        let split = match cfg.mode {
            Mode::Baseline => threshold_split(ds, &omega)?,
            Mode::EasyOnly | Mode::Full => class_balanced_split(ds, &omega, cfg.selection.percent)?,
        };
        check_partition(ds.len(), split.easy.iter().copied(), split.hard.iter().copied(), "easy/hard split")?;
        let quality = selection_quality(&split, ds);

        let mut labeled: Vec<LabeledSample> = split
            .easy
            .iter()
            .map(|&i| LabeledSample {
                index: i,
                label: ds.noisy_labels[i],
                source: LabelSource::Easy { omega: omega[i] },
            })
            .collect();
        let (anchors, correction, unlabeled) = if cfg.mode == Mode::Full && !split.hard.is_empty() {
            let easy = FeatureSet::embed(&self.model, &ds.inputs, &ds.noisy_labels, &split.easy, Role::Easy)?;
            let hard = FeatureSet::embed(&self.model, &ds.inputs, &ds.noisy_labels, &split.hard, Role::Hard)?;
            let pairs = sample_pairs(&easy, cfg.hallucinator.anchors_per_sample, &mut rng)?;
            let anchors = hallucinate_pairs(&self.model.hallucinator, &easy, &pairs, cfg.hallucinator.lambda_p)?;
            let result = correct_hard(&anchors, &hard, &cfg.correction)?;
            labeled.extend(result.corrected.iter().map(|c| LabeledSample {
                index: c.index,
                label: c.label,
                source: LabelSource::Corrected { confidence: c.confidence },
            }));
            let residual = result.residual.clone();
            (Some(anchors), Some(result), residual)
        } else {
            (None, None, split.hard.clone())
        };
        check_partition(ds.len(), labeled.iter().map(|s| s.index), unlabeled.iter().copied(), "labelled/unlabelled sets")?;

        let mut artifacts = ClassificationArtifacts {
            losses,
            split,
            quality,
            anchors,
            correction,
            labeled,
            unlabeled,
            epoch_losses: Vec::new(),
        };
        let labeled_noise = artifacts.labeled_noise_rate(ds);
        for _ in 0..cfg.train.classification_epochs {
            let started = Instant::now();
            let lambda = cfg.ssl.ramped_lambda(self.ssl_epochs);
            let loss = ssl_epoch(
                &mut self.model,
                &mut self.opt,
                &ds.inputs,
                &artifacts.labeled,
                &artifacts.unlabeled,
                &self.sigma,
                &cfg.ssl,
                lambda,
                cfg.train.batch_size,
                &mut rng,
            )?;
            self.ssl_epochs += 1;
            self.epoch += 1;
            artifacts.epoch_losses.push(loss);
            let mut m = EpochMetrics::new(self.epoch, outer, Phase::Classification, loss, self.noise_rate);
            m.easy_precision = Some(artifacts.quality.precision);
            m.easy_recall = Some(artifacts.quality.recall);
            m.labeled_noise_rate = Some(labeled_noise);
            if let Some(c) = &artifacts.correction {
                m.correction_accuracy = c.accuracy(ds);
                m.correction_coverage = Some(c.coverage());
            }
            self.emit(m, true, started, sink)?;
        }
        if self.model.hallucinator.digest() != frozen {
            return Err(Error::Validation("hallucinator changed during the classification phase".into()));
        }
        Ok(artifacts)
    }

    /// Train the hallucinator on the current easy features with the feature
    /// extractor and classifier frozen. Returns the loss of every epoch.
    pub fn hallucinator_phase(&mut self, outer: usize, easy: &[usize], sink: &mut dyn MetricsSink) -> Result<Vec<f64>> {
        let cfg = self.cfg;
        let ds = &self.data.train;
        let frozen = (self.model.extractor.digest(), self.model.classifier.digest());
        let mut rng = rng::stream(cfg.seed, "hallucinator", outer as u64);
        let started = Instant::now();
        let features = FeatureSet::embed(&self.model, &ds.inputs, &ds.noisy_labels, easy, Role::Easy)?;
        let curve = train_hallucinator(
            &mut self.model.hallucinator,
            &self.model.classifier,
            &features,
            &cfg.hallucinator,
            &mut rng,
        )?;
        if (self.model.extractor.digest(), self.model.classifier.digest()) != frozen {
            return Err(Error::Validation("extractor or classifier changed during the hallucinator phase".into()));
        }
        for &loss in &curve {
            self.epoch += 1;
            let m = EpochMetrics::new(self.epoch, outer, Phase::Hallucinator, loss, self.noise_rate);
            self.emit(m, false, started, sink)?;
        }
        Ok(curve)
    }

    /// Best-validation model so far with its accuracy and epoch.
    pub fn best(&self) -> Option<(f64, usize, &ModelBundle)> {
        self.best.as_ref().map(|(a, e, m)| (*a, *e, m))
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    /// Best-validation model.
    pub checkpoint: Checkpoint,
    /// Model at the end of training.
    pub final_model: ModelBundle,
    /// Artifacts of the last classification phase, if any ran.
    pub last_phase: Option<ClassificationArtifacts>,
    pub hallucinator_curves: Vec<Vec<f64>>,
}

/// Warm-up, then `outer_iterations` rounds of a classification phase
/// followed (in full mode) by a hallucinator phase. Emits one record per
/// epoch and a closing summary.
pub fn run_experiment(cfg: &RunConfig, data: &ExperimentData, sink: &mut dyn MetricsSink) -> Result<RunOutcome> {
    let mut exp = Experiment::new(cfg, data)?;
    exp.warmup(sink)?;
    let mut last_phase = None;
    let mut curves = Vec::new();
    for outer in 1..=cfg.train.outer_iterations {
        let artifacts = exp.classification_phase(outer, sink)?;
        if cfg.mode == Mode::Full {
            curves.push(exp.hallucinator_phase(outer, &artifacts.split.easy, sink)?);
        }
        last_phase = Some(artifacts);
    }
    let (best_val, best_epoch, best_model) = exp.best().expect("warm-up records at least one epoch");
    let best_model = best_model.clone();
    let summary = Summary {
        mode: cfg.mode,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        epochs: exp.epoch(),
        best_epoch,
        best_val_accuracy: best_val,
        test_accuracy: evaluate(&best_model, &data.test)?,
        final_test_accuracy: evaluate(&exp.model, &data.test)?,
        noise_rate: exp.noise_rate,
    };
    sink.record(&Record::Summary(summary.clone()))?;
    Ok(RunOutcome {
        summary,
        checkpoint: Checkpoint {
            model: best_model,
            config_hash: cfg.hash(),
        },
        final_model: exp.model,
        last_phase,
        hallucinator_curves: curves,
    })
}
