use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use splr_elm::checkpoint::Checkpoint;
use splr_elm::config::{ModelKind, RunConfig, ThresholdMode};
use splr_elm::cyclemodel::{self, DEFAULT_PIPELINE};
use splr_elm::experiment::{self, DataPaths, EvalReport};
use splr_elm::models::Backend;

#[derive(Parser)]
#[command(name = "splr-elm", version, about = "Train and evaluate ELM, OS-ELM and SPLR-ELM classifiers")]
struct Cli {
    /// Training shuffle seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for checkpoint and report.jsonl.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write a checkpoint plus a report record.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Evaluate a checkpoint on the test set.
    Eval {
        /// Checkpoint file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// ELM, OS-ELM and SPLR (real and fxp16) on the same data.
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Cycle counts and throughput of the hardware configurations.
    Cycles {
        #[arg(long, default_value_t = 784)]
        input_dim: u64,
        #[arg(long, default_value_t = DEFAULT_PIPELINE)]
        pipeline: u64,
    },
    /// Operation counts of ELM and SPLR training across hidden sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 128, 256, 512])]
        hidden: Vec<usize>,
        #[arg(long, default_value = "0xACE1")]
        base_seed: String,
    },
}

#[derive(Args, Default)]
struct ModelArgs {
    /// elm, oselm or splr.
    #[arg(long)]
    model: Option<ModelKind>,
    /// real or fxp16.
    #[arg(long)]
    backend: Option<Backend>,
    /// Hidden neurons.
    #[arg(long, short = 'm')]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    w_max: Option<f64>,
    /// `median` or a number.
    #[arg(long)]
    threshold: Option<ThresholdMode>,
    #[arg(long)]
    lambda: Option<f64>,
    /// OS-ELM initial batch.
    #[arg(long)]
    n0: Option<usize>,
    /// LFSR base seed (decimal or 0x hex).
    #[arg(long)]
    base_seed: Option<String>,
}

#[derive(Args, Default)]
struct DataArgs {
    #[arg(long)]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Directory with the four standard IDX files.
    #[arg(long, env = experiment::DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Stratified training subset (0 keeps all).
    #[arg(long)]
    subset_train: Option<usize>,
    /// Stratified test subset (0 keeps all).
    #[arg(long)]
    subset_test: Option<usize>,
    /// Gaussian feature noise; bare flag means 0.1.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.1")]
    noise_sigma: Option<f64>,
    /// Long-tailed training set, 400 down to 200 per class.
    #[arg(long)]
    long_tailed: bool,
    #[arg(long)]
    data_seed: Option<u64>,
}

fn set<T: ToString>(cfg: &mut RunConfig, key: &str, v: &Option<T>) -> Result<()> {
    if let Some(v) = v {
        cfg.set(key, &v.to_string())?;
    }
    Ok(())
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text).with_context(|| format!("in config {}", path.display()))?;
    }
    set(&mut cfg, "seed", &cli.seed)?;
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn apply_model(cfg: &mut RunConfig, m: &ModelArgs) -> Result<()> {
    set(cfg, "model", &m.model)?;
    set(cfg, "backend", &m.backend)?;
    set(cfg, "hidden", &m.hidden)?;
    set(cfg, "epochs", &m.epochs)?;
    set(cfg, "eta", &m.eta)?;
    set(cfg, "w_max", &m.w_max)?;
    set(cfg, "threshold", &m.threshold)?;
    set(cfg, "lambda", &m.lambda)?;
    set(cfg, "n0", &m.n0)?;
    set(cfg, "base_seed", &m.base_seed)?;
    Ok(())
}

fn apply_data(cfg: &mut RunConfig, d: &DataArgs) -> Result<Option<PathBuf>> {
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    set(cfg, "train_images", &path(&d.train_images))?;
    set(cfg, "train_labels", &path(&d.train_labels))?;
    set(cfg, "test_images", &path(&d.test_images))?;
    set(cfg, "test_labels", &path(&d.test_labels))?;
    set(cfg, "subset_train", &d.subset_train)?;
    set(cfg, "subset_test", &d.subset_test)?;
    set(cfg, "noise_sigma", &d.noise_sigma)?;
    set(cfg, "data_seed", &d.data_seed)?;
    if d.long_tailed {
        cfg.long_tailed = true;
    }
    Ok(d.data_dir.clone())
}

/// Appends one JSON record to `report.jsonl` in the output directory.
fn append_report<T: Serialize>(out: Option<&Path>, record: &T) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("report.jsonl");
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    file.write_all(line.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::Train { model, data } => {
            apply_model(&mut cfg, model)?;
            let dir = apply_data(&mut cfg, data)?;
            let paths = DataPaths::resolve(&cfg, dir.as_deref())?;
            let (train, test) = experiment::load_data(&cfg, &paths)?;
            let outcome = experiment::train(&cfg, &train, &test)?;
            let r = &outcome.report;
            println!(
                "{} {} M={} train {} test {} ({:.1}s)",
                cfg.model,
                if cfg.model == ModelKind::Splr { cfg.backend.to_string() } else { "real".into() },
                cfg.hidden,
                pct(r.train.accuracy),
                pct(r.test.accuracy),
                r.wall_time_s
            );
            if !r.updates_per_epoch.is_empty() {
                println!("updates per epoch: {:?}", r.updates_per_epoch);
            }
            if let Some(dir) = &cfg.out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join("checkpoint.bin");
                outcome.checkpoint.save(&path)?;
                fs::write(dir.join("config.txt"), cfg.to_text())?;
                println!("checkpoint: {}", path.display());
            }
            append_report(cfg.out.as_deref(), r)?;
        }
        Command::Eval { checkpoint, data } => {
            let dir = apply_data(&mut cfg, data)?;
            let paths = DataPaths::resolve(&cfg, dir.as_deref())?;
            let ck = Checkpoint::load(checkpoint)?;
            let test = experiment::load_test(&cfg, &paths)?;
            let metrics = experiment::evaluate_checkpoint(&ck, &test)?;
            println!("test {} on {} samples", pct(metrics.accuracy), metrics.count);
            let recall: Vec<String> = metrics.per_class_recall.iter().map(|r| format!("{:.3}", r)).collect();
            println!("per-class recall: {}", recall.join(" "));
            let report = EvalReport {
                record: "eval",
                config: cfg.clone(),
                checkpoint: checkpoint.display().to_string(),
                test: metrics,
            };
            append_report(cfg.out.as_deref(), &report)?;
        }
        Command::Compare { model, data } => {
            apply_model(&mut cfg, model)?;
            let dir = apply_data(&mut cfg, data)?;
            let paths = DataPaths::resolve(&cfg, dir.as_deref())?;
            let (train, test) = experiment::load_data(&cfg, &paths)?;
            let report = experiment::compare(&cfg, &train, &test)?;
            print!("{}", experiment::render_compare(&report));
            append_report(cfg.out.as_deref(), &report)?;
        }
        Command::Cycles { input_dim, pipeline } => {
            if *input_dim == 0 {
                bail!("input dimension must be positive");
            }
            let rows = cyclemodel::cycle_table(*input_dim, *pipeline)?;
            print!("{}", cyclemodel::render_cycle_table(&rows));
            append_report(cfg.out.as_deref(), &serde_json::json!({"record": "cycles", "config": cfg, "rows": rows}))?;
        }
        Command::Bench { hidden, base_seed } => {
            cfg.set("base_seed", base_seed)?;
            let report = cyclemodel::complexity_report(hidden, cfg.base_seed)?;
            print!("{}", cyclemodel::render_complexity(&report));
            append_report(
                cfg.out.as_deref(),
                &serde_json::json!({"record": "bench", "config": cfg, "report": report}),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
