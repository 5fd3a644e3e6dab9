//! Run configuration, loaded from TOML. Every table rejects unknown keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correction::CorrectionConfig;
use crate::data::{BlobSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::hallucinator::HallucinatorConfig;
use crate::ssl::SslConfig;

/// Which steps of the classification phase run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Posterior-threshold split, easy labelled / hard unlabelled.
    Baseline,
    /// Class-balanced split, easy labelled / hard unlabelled.
    EasyOnly,
    /// Class-balanced split plus anchor hallucination and correction.
    Full,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "easy-only" => Ok(Mode::EasyOnly),
            "full" => Ok(Mode::Full),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::EasyOnly => "easy-only",
            Mode::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub classes: usize,
    pub input_dim: usize,
    pub overlap: f64,
    pub hard_fraction: f64,
    pub hard_mix: f64,
    pub context_dims: usize,
    pub context_radius: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            input_dim: 16,
            overlap: 0.75,
            hard_fraction: 0.2,
            hard_mix: 0.35,
            context_dims: 0,
            context_radius: crate::data::blobs::MEAN_RADIUS,
            train_per_class: 500,
            val_per_class: 50,
            test_per_class: 125,
        }
    }
}

impl DataConfig {
    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            classes: self.classes,
            input_dim: self.input_dim,
            overlap: self.overlap,
            hard_fraction: self.hard_fraction,
            hard_mix: self.hard_mix,
            context_dims: self.context_dims,
            context_radius: self.context_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden widths of the feature extractor.
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    /// Hallucinator hidden width; `None` means twice the feature width.
    pub hallucinator_hidden: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            feature_dim: 16,
            hallucinator_hidden: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub warmup_epochs: usize,
    pub outer_iterations: usize,
    pub classification_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 10,
            outer_iterations: 5,
            classification_epochs: 10,
            batch_size: 64,
            lr: 0.05,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Percentage P of the training set selected as easy.
    pub percent: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { percent: 60.0 }
    }
}

/// Hyperparameter grid for `sweep`; empty lists keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub percent: Vec<f64>,
    pub lambda_p: Vec<f64>,
    pub lambda_conf: Vec<f64>,
    pub k: Vec<usize>,
    pub lambda_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub hallucinator: HallucinatorConfig,
    #[serde(default)]
    pub correction: CorrectionConfig,
    #[serde(default)]
    pub ssl: SslConfig,
    #[serde(default, skip_serializing_if = "is_default_sweep")]
    pub sweep: SweepConfig,
}

fn default_mode() -> Mode {
    Mode::Full
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::FeatureDependent { rate: 0.4, parts: 4 }
}

fn is_default_sweep(s: &SweepConfig) -> bool {
    *s == SweepConfig::default()
}

impl RunConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            mode: default_mode(),
            data: DataConfig::default(),
            noise: default_noise(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            selection: SelectionConfig::default(),
            hallucinator: HallucinatorConfig::default(),
            correction: CorrectionConfig::default(),
            ssl: SslConfig::default(),
            sweep: SweepConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn hallucinator_hidden(&self) -> usize {
        self.model.hallucinator_hidden.unwrap_or(2 * self.model.feature_dim)
    }

    /// Layer widths of the feature extractor.
    pub fn extractor_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.data.input_dim];
        s.extend(&self.model.hidden);
        s.push(self.model.feature_dim);
        s
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.data.blob_spec().validate().map_err(wrap)?;
        if self.data.train_per_class == 0 || self.data.val_per_class == 0 || self.data.test_per_class == 0 {
            return Err(Error::Config("every split needs at least one sample per class".into()));
        }
        self.noise.validate(self.data.classes).map_err(wrap)?;
        if self.model.feature_dim == 0 || self.model.hidden.contains(&0) || self.hallucinator_hidden() == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.train.warmup_epochs == 0 {
            return Err(Error::Config("warm-up needs at least one epoch".into()));
        }
        if self.train.batch_size == 0 || self.train.lr < 0.0 || !(0.0..1.0).contains(&self.train.momentum) {
            return Err(Error::Config("train needs batch_size > 0, lr >= 0, momentum in [0, 1)".into()));
        }
        if !(self.selection.percent > 0.0 && self.selection.percent <= 100.0) {
            return Err(Error::Config("selection.percent must lie in (0, 100]".into()));
        }
        self.hallucinator.validate().map_err(wrap)?;
        self.correction.validate().map_err(wrap)?;
        self.ssl.validate().map_err(wrap)?;
        Ok(())
    }
}
