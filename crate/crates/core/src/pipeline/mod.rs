//! Experiment orchestration and run artifacts.
//!
//! A run directory holds:
//!
//! - `config.toml`: the resolved config
//! - `metrics.jsonl`: one record per epoch plus a closing summary
//! - `timings.jsonl`: wall-clock seconds per epoch
//! - `checkpoint.nllc`: best-validation model
//! - `split.csv`, `correction.csv`, `anchors.nllc`: artifacts of the last
//!   classification phase, when present
//! - `failure.json`: written instead of a summary when the run aborts

pub mod config;
pub mod export;
pub mod metrics;
pub mod run;
pub mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub use config::{Mode, RunConfig};
pub use metrics::{EpochMetrics, JsonlSink, MemorySink, MetricsSink, Phase, Record, Summary};
pub use run::{build_data, evaluate, run_experiment, ClassificationArtifacts, Experiment, ExperimentData, RunOutcome};

use crate::error::{Error, Result};

/// Typed record written when a run aborts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for Failure {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

fn write_artifacts(cfg: &RunConfig, data: &ExperimentData, out: &Path, echo: bool) -> Result<RunOutcome> {
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let mut sink = JsonlSink::create(out, echo)?;
    let outcome = run_experiment(cfg, data, &mut sink)?;
    outcome.checkpoint.save(out.join("checkpoint.nllc"))?;
    if let Some(phase) = &outcome.last_phase {
        phase.split.write_csv(&data.train, BufWriter::new(File::create(out.join("split.csv"))?))?;
        if let Some(c) = &phase.correction {
            c.write_csv(&data.train, BufWriter::new(File::create(out.join("correction.csv"))?))?;
        }
        if let Some(a) = &phase.anchors {
            export::anchors_container(a)?.save(out.join("anchors.nllc"))?;
        }
    }
    Ok(outcome)
}

/// Run one experiment into `out`. On error a `failure.json` is written next
/// to the partial metric stream and the error is returned.
pub fn run_to_dir(cfg: &RunConfig, data: &ExperimentData, out: impl AsRef<Path>, echo: bool) -> Result<RunOutcome> {
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    let failure = out.join("failure.json");
    if failure.exists() {
        std::fs::remove_file(&failure)?;
    }
    write_artifacts(cfg, data, out, echo).inspect_err(|e| {
        if let Ok(text) = serde_json::to_string_pretty(&Failure::from(e)) {
            let _ = std::fs::write(&failure, text);
        }
    })
}
