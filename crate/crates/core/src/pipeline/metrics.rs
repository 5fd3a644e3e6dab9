//! Line-delimited metric records.
//!
//! Every record is one JSON object per line with a `record` tag. Wall-clock
//! times live in a separate stream so that the metric stream of a run is a
//! pure function of its config.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Classification,
    Hallucinator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// Global epoch counter, starting at 1 and increasing by one per record.
    pub epoch: usize,
    /// 0 during warm-up, then 1-based.
    pub outer_iteration: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub easy_precision: Option<f64>,
    pub easy_recall: Option<f64>,
    pub correction_accuracy: Option<f64>,
    pub correction_coverage: Option<f64>,
    /// Realised noise rate of the training labels.
    pub noise_rate: f64,
    /// Fraction of the labelled set whose training label is wrong.
    pub labeled_noise_rate: Option<f64>,
}

impl EpochMetrics {
    pub fn new(epoch: usize, outer_iteration: usize, phase: Phase, train_loss: f64, noise_rate: f64) -> Self {
        Self {
            epoch,
            outer_iteration,
            phase,
            train_loss,
            val_accuracy: None,
            test_accuracy: None,
            easy_precision: None,
            easy_recall: None,
            correction_accuracy: None,
            correction_coverage: None,
            noise_rate,
            labeled_noise_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Test accuracy of the best-validation checkpoint.
    pub test_accuracy: f64,
    /// Test accuracy of the model at the end of training.
    pub final_test_accuracy: f64,
    pub noise_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Record {
    Epoch(EpochMetrics),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub epoch: usize,
    pub phase: Phase,
    pub seconds: f64,
}

/// Destination for records emitted during a run.
pub trait MetricsSink {
    fn record(&mut self, record: &Record) -> Result<()>;

    fn timing(&mut self, _timing: &Timing) -> Result<()> {
        Ok(())
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub records: Vec<Record>,
    pub timings: Vec<Timing>,
}

impl MetricsSink for MemorySink {
    fn record(&mut self, record: &Record) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }

    fn timing(&mut self, timing: &Timing) -> Result<()> {
        self.timings.push(timing.clone());
        Ok(())
    }
}

/// Appends records to `metrics.jsonl` and timings to `timings.jsonl`.
pub struct JsonlSink {
    metrics: BufWriter<File>,
    timings: BufWriter<File>,
    echo: bool,
}

impl JsonlSink {
    pub fn create(dir: impl AsRef<Path>, echo: bool) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            metrics: BufWriter::new(File::create(dir.join("metrics.jsonl"))?),
            timings: BufWriter::new(File::create(dir.join("timings.jsonl"))?),
            echo,
        })
    }
}

fn line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Format(e.to_string()))
}

impl MetricsSink for JsonlSink {
    fn record(&mut self, record: &Record) -> Result<()> {
        let text = line(record)?;
        writeln!(self.metrics, "{text}")?;
        self.metrics.flush()?;
        if self.echo {
            eprintln!("{text}");
        }
        Ok(())
    }

    fn timing(&mut self, timing: &Timing) -> Result<()> {
        writeln!(self.timings, "{}", line(timing)?)?;
        self.timings.flush()?;
        Ok(())
    }
}

/// Parse a metric stream back into records.
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, l) in file.lines().enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&l).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Checks that a record stream is well ordered: epochs count up from 1, the
/// phase order within an outer iteration is respected, accuracies lie in
/// [0, 1] and at most one summary closes the stream.
pub fn check_stream(records: &[Record]) -> Result<()> {
    let mut last: Option<(usize, usize, Phase)> = None;
    for (i, r) in records.iter().enumerate() {
        match r {
            Record::Epoch(m) => {
                let expected = last.map_or(1, |(e, _, _)| e + 1);
                if m.epoch != expected {
                    return Err(Error::Format(format!("record {i}: epoch {} after {}", m.epoch, expected - 1)));
                }
                if let Some((_, outer, phase)) = last {
                    if (m.outer_iteration, m.phase) < (outer, phase) {
                        return Err(Error::Format(format!("record {i}: phase order violated")));
                    }
                }
                for a in [m.val_accuracy, m.test_accuracy, m.easy_precision, m.easy_recall, m.correction_accuracy, m.correction_coverage]
                    .into_iter()
                    .flatten()
                {
                    if !(0.0..=1.0).contains(&a) {
                        return Err(Error::Format(format!("record {i}: rate {a} outside [0, 1]")));
                    }
                }
                last = Some((m.epoch, m.outer_iteration, m.phase));
            }
            Record::Summary(_) if i + 1 != records.len() => {
                return Err(Error::Format("summary must be the last record".into()));
            }
            Record::Summary(_) => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip() {
        let mut m = EpochMetrics::new(1, 0, Phase::Warmup, 0.5, 0.4);
        m.test_accuracy = Some(0.75);
        let text = line(&Record::Epoch(m.clone())).unwrap();
        assert!(text.starts_with("{\"record\":\"epoch\""));
        assert_eq!(serde_json::from_str::<Record>(&text).unwrap(), Record::Epoch(m));
    }

    #[test]
    fn stream_order_checked() {
        let e = |epoch, outer, phase| Record::Epoch(EpochMetrics::new(epoch, outer, phase, 0.0, 0.0));
        assert!(check_stream(&[e(1, 0, Phase::Warmup), e(2, 1, Phase::Classification), e(3, 1, Phase::Hallucinator)]).is_ok());
        assert!(check_stream(&[e(1, 0, Phase::Warmup), e(3, 1, Phase::Classification)]).is_err());
        assert!(check_stream(&[e(1, 1, Phase::Hallucinator), e(2, 1, Phase::Classification)]).is_err());
        let mut bad = EpochMetrics::new(1, 0, Phase::Warmup, 0.0, 0.0);
        bad.test_accuracy = Some(1.5);
        assert!(check_stream(&[Record::Epoch(bad)]).is_err());
    }
}
