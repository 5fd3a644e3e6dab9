use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use nll_core::data::{io as dataset_io, Split};
use nll_core::nn::Checkpoint;
use nll_core::pipeline::{self, build_data, evaluate, export, sweep, Failure, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "nll", version, about = "Noisy-label learning experiments on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed; required without --config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// baseline | easy-only | full
    #[arg(long)]
    mode: Option<Mode>,
    /// Do not echo metric records to stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise train/val/test splits and write them to --out.
    Generate(Common),
    /// Run one experiment.
    Run(Common),
    /// Accuracy of a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run every point of the config's [sweep] grid.
    Sweep(Common),
    /// Dump unit features and hallucinated anchors for a dataset file.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output container file.
        #[arg(long)]
        out: PathBuf,
        /// Anchors per sample; 0 skips anchors.
        #[arg(long, default_value_t = 1)]
        pairs: usize,
        #[arg(long, default_value_t = 0.75)]
        lambda_p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn resolve(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match (&c.config, c.seed) {
        (Some(path), _) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(seed)) => RunConfig::with_seed(seed),
        (None, None) => bail!("either --config or --seed is required"),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = c.mode {
        cfg.mode = mode;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generate(c: &Common) -> anyhow::Result<()> {
    let cfg = resolve(c)?;
    let data = build_data(&cfg)?;
    std::fs::create_dir_all(&c.out)?;
    for (name, ds) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        dataset_io::save(ds, c.out.join(format!("{name}.nllc")))?;
        dataset_io::save_csv(ds, c.out.join(format!("{name}.csv")))?;
    }
    if !c.quiet {
        eprintln!(
            "wrote {} train / {} val / {} test samples, realised noise rate {:.4}",
            data.train.len(),
            data.val.len(),
            data.test.len(),
            nll_core::data::noise_rate(&data.train)
        );
    }
    Ok(())
}

fn run(c: &Common) -> anyhow::Result<()> {
    let cfg = resolve(c)?;
    let data = build_data(&cfg)?;
    let outcome = pipeline::run_to_dir(&cfg, &data, &c.out, !c.quiet)?;
    println!("{}", serde_json::to_string(&outcome.summary)?);
    Ok(())
}

fn sweep_cmd(c: &Common) -> anyhow::Result<()> {
    let base = resolve(c)?;
    let points = sweep::expand(&base)?;
    let data = build_data(&base)?;
    std::fs::create_dir_all(&c.out)?;
    let mut table = BufWriter::new(File::create(c.out.join("sweep.csv"))?);
    writeln!(table, "run,percent,lambda_p,lambda_conf,k,lambda_mse,best_val_accuracy,test_accuracy,final_test_accuracy")?;
    for (i, (p, cfg)) in points.iter().enumerate() {
        let dir = c.out.join(format!("run-{i:03}"));
        let s = pipeline::run_to_dir(cfg, &data, &dir, false)?.summary;
        writeln!(
            table,
            "{i},{},{},{},{},{},{},{},{}",
            p.percent, p.lambda_p, p.lambda_conf, p.k, p.lambda_mse, s.best_val_accuracy, s.test_accuracy, s.final_test_accuracy
        )?;
        table.flush()?;
        if !c.quiet {
            eprintln!("run-{i:03} {} test accuracy {:.4}", serde_json::to_string(p)?, s.test_accuracy);
        }
    }
    Ok(())
}

fn eval(checkpoint: &Path, data: &Path) -> anyhow::Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = dataset_io::load(data)?;
    if ds.split == Split::Train && !ds.is_clean() {
        eprintln!("note: evaluating against the true labels of a noisy training split");
    }
    let acc = evaluate(&ck.model, &ds)?;
    println!(
        "{}",
        serde_json::json!({ "split": ds.split, "n": ds.len(), "accuracy": acc, "config_hash": ck.config_hash })
    );
    Ok(())
}

fn export_embeddings(checkpoint: &Path, data: &Path, out: &Path, pairs: usize, lambda_p: f64, seed: u64) -> anyhow::Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = dataset_io::load(data)?;
    export::embeddings_container(&ck.model, &ds, pairs, lambda_p, seed)?.save(out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(c) => generate(c),
        Command::Run(c) => run(c),
        Command::Sweep(c) => sweep_cmd(c),
        Command::Eval { checkpoint, data } => eval(checkpoint, data),
        Command::ExportEmbeddings {
            checkpoint,
            data,
            out,
            pairs,
            lambda_p,
            seed,
        } => export_embeddings(checkpoint, data, out, *pairs, *lambda_p, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let failure = match e.downcast_ref::<nll_core::Error>() {
                Some(inner) => Failure::from(inner),
                None => Failure {
                    kind: "usage".into(),
                    message: format!("{e:#}"),
                },
            };
            eprintln!("{}", serde_json::to_string(&failure).unwrap_or_else(|_| format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
