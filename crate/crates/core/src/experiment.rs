//! End-to-end runs: load data per a [`RunConfig`], train, evaluate, and
//! produce report records and checkpoints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ModelKind, RunConfig, ThresholdMode};
use crate::counter::OpCounter;
use crate::datasets::{self, Dataset, DatasetError};
use crate::models::{
    calibrate_threshold, evaluate, Backend, ElmModel, EpochStats, Metrics, ModelError, OsElmModel,
    SplrConfig, SplrModel,
};
use crate::prng::SeedPlan;

/// Directory holding the four standard IDX files.
pub const DATA_DIR_ENV: &str = "SPLR_DATA_DIR";
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";
pub const LONG_TAIL_MAJOR: usize = 400;
pub const LONG_TAIL_MINOR: usize = 200;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no {0} path given and {DATA_DIR_ENV} is not set")]
    MissingPath(&'static str),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint expects {expected} input features, data has {found}")]
    InputDim { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DataPaths {
    /// Explicit paths win; missing ones fall back to `dir` with the
    /// standard file names.
    pub fn resolve(cfg: &RunConfig, dir: Option<&Path>) -> Result<Self, RunError> {
        let pick = |explicit: &Option<PathBuf>, name: &'static str, what: &'static str| {
            explicit
                .clone()
                .or_else(|| dir.map(|d| d.join(name)))
                .ok_or(RunError::MissingPath(what))
        };
        Ok(Self {
            train_images: pick(&cfg.train_images, TRAIN_IMAGES, "train images")?,
            train_labels: pick(&cfg.train_labels, TRAIN_LABELS, "train labels")?,
            test_images: pick(&cfg.test_images, TEST_IMAGES, "test images")?,
            test_labels: pick(&cfg.test_labels, TEST_LABELS, "test labels")?,
        })
    }

    pub fn from_env(cfg: &RunConfig) -> Result<Self, RunError> {
        let dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        Self::resolve(cfg, dir.as_deref())
    }
}

fn subset(d: Dataset, n: usize, seed: u64) -> Result<Dataset, DatasetError> {
    if n == 0 || n >= d.len() {
        Ok(d)
    } else {
        datasets::subsample(&d, n, seed, true)
    }
}

pub fn load_test(cfg: &RunConfig, paths: &DataPaths) -> Result<Dataset, RunError> {
    let test = datasets::load_idx(&paths.test_images, &paths.test_labels)?;
    let mut test = subset(test, cfg.subset_test, cfg.data_seed.wrapping_add(1))?;
    if let Some(sigma) = cfg.noise_sigma {
        test = datasets::add_gaussian_noise(&test, sigma, cfg.data_seed.wrapping_add(3))?;
    }
    Ok(test)
}

/// Training and test sets after subsetting, the optional long tail and the
/// optional noise.
pub fn load_data(cfg: &RunConfig, paths: &DataPaths) -> Result<(Dataset, Dataset), RunError> {
    let train = datasets::load_idx(&paths.train_images, &paths.train_labels)?;
    let mut train = subset(train, cfg.subset_train, cfg.data_seed)?;
    if cfg.long_tailed {
        train = datasets::make_long_tailed(&train, LONG_TAIL_MAJOR, LONG_TAIL_MINOR)?;
    }
    if let Some(sigma) = cfg.noise_sigma {
        train = datasets::add_gaussian_noise(&train, sigma, cfg.data_seed.wrapping_add(2))?;
    }
    Ok((train, load_test(cfg, paths)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub record: &'static str,
    pub config: RunConfig,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Threshold actually used (SPLR only).
    pub threshold: Option<f64>,
    pub eta: Option<f64>,
    pub train: Metrics,
    pub test: Metrics,
    pub epochs: Vec<EpochStats>,
    pub updates_per_epoch: Vec<usize>,
    /// OS-ELM samples streamed after the initial batch.
    pub streamed: Option<usize>,
    pub ops: OpCounter,
    pub wall_time_s: f64,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: Checkpoint,
}

/// Builds an untrained SPLR model, calibrating the threshold if needed.
pub fn build_splr(cfg: &RunConfig, train: &Dataset) -> Result<SplrModel, ModelError> {
    let plan = SeedPlan::new(cfg.base_seed, cfg.hidden)?;
    let threshold = match cfg.threshold {
        ThresholdMode::Median => calibrate_threshold(&plan, train.dim(), train.samples())?,
        ThresholdMode::Fixed(v) => v,
    };
    SplrModel::new(SplrConfig {
        base_seed: cfg.base_seed,
        input_dim: train.dim(),
        hidden: cfg.hidden,
        threshold,
        eta: cfg.eta_or_default(),
        w_max: cfg.w_max,
        backend: cfg.backend,
    })
}

pub fn train(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<TrainOutcome, RunError> {
    let start = Instant::now();
    let mut ops = OpCounter::new();
    let plan = SeedPlan::new(cfg.base_seed, cfg.hidden).map_err(ModelError::from)?;
    let (train_m, test_m, epochs, streamed, threshold, eta, checkpoint) = match cfg.model {
        ModelKind::Splr => {
            let mut model = build_splr(cfg, train)?;
            let train_set = model.encode(train.samples())?;
            let epochs = model.fit(&train_set, cfg.epochs, cfg.seed, &mut ops)?;
            let test_set = model.encode(test.samples())?;
            let (train_m, test_m) = (model.evaluate_encoded(&train_set), model.evaluate_encoded(&test_set));
            let (theta, eta) = (model.config().threshold, model.config().eta);
            (train_m, test_m, epochs, None, Some(theta), Some(eta), Checkpoint::Splr(model))
        }
        ModelKind::Elm => {
            let mut model = ElmModel::from_plan(&plan, train.dim())?;
            let mut solve = OpCounter::new();
            model.fit_counted(train.samples(), cfg.lambda, &mut ops, &mut solve)?;
            ops.merge(&solve);
            let (train_m, test_m) = (evaluate(&model, train)?, evaluate(&model, test)?);
            let w_out = model.w_out().ok_or(ModelError::NotFitted)?.clone();
            let ck = Checkpoint::Elm {
                base_seed: cfg.base_seed,
                input_dim: train.dim(),
                w_out,
            };
            (train_m, test_m, Vec::new(), None, None, None, ck)
        }
        ModelKind::Oselm => {
            let mut model = OsElmModel::new(ElmModel::from_plan(&plan, train.dim())?, cfg.n0);
            let streamed = model.train(train.samples(), cfg.lambda, cfg.seed)?;
            let (train_m, test_m) = (evaluate(&model, train)?, evaluate(&model, test)?);
            let w_out = model.elm().w_out().ok_or(ModelError::NotFitted)?.clone();
            let ck = Checkpoint::Elm {
                base_seed: cfg.base_seed,
                input_dim: train.dim(),
                w_out,
            };
            (train_m, test_m, Vec::new(), Some(streamed), None, None, ck)
        }
    };
    let report = TrainReport {
        record: "train",
        config: cfg.clone(),
        train_samples: train.len(),
        test_samples: test.len(),
        threshold,
        eta,
        train: train_m,
        test: test_m,
        updates_per_epoch: epochs.iter().map(|e| e.updates).collect(),
        epochs,
        streamed,
        ops,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { report, checkpoint })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub record: &'static str,
    pub config: RunConfig,
    pub checkpoint: String,
    pub test: Metrics,
}

/// Evaluates a stored checkpoint on `test`.
pub fn evaluate_checkpoint(ck: &Checkpoint, test: &Dataset) -> Result<Metrics, RunError> {
    match ck {
        Checkpoint::Splr(model) => {
            if model.config().input_dim != test.dim() {
                return Err(RunError::InputDim {
                    expected: model.config().input_dim,
                    found: test.dim(),
                });
            }
            Ok(model.evaluate_encoded(&model.encode(test.samples())?))
        }
        Checkpoint::Elm { input_dim, .. } => {
            if *input_dim != test.dim() {
                return Err(RunError::InputDim {
                    expected: *input_dim,
                    found: test.dim(),
                });
            }
            let model = ck.elm_model()?.ok_or(ModelError::NotFitted)?;
            Ok(evaluate(&model, test)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub paradigm: ModelKind,
    pub precision: Backend,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// ELM accuracy minus this row's, in percentage points.
    pub train_gap_vs_elm: f64,
    pub test_gap_vs_elm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub record: &'static str,
    pub config: RunConfig,
    pub rows: Vec<CompareRow>,
    /// SPLR real minus SPLR fxp16 test accuracy, percentage points.
    pub fxp_test_gap_vs_real: f64,
    pub runs: Vec<TrainReport>,
}

/// ELM, OS-ELM (reals) and SPLR on both backends over the same data.
pub fn compare(cfg: &RunConfig, train_set: &Dataset, test_set: &Dataset) -> Result<CompareReport, RunError> {
    let variants = [
        (ModelKind::Elm, Backend::Real),
        (ModelKind::Oselm, Backend::Real),
        (ModelKind::Splr, Backend::Real),
        (ModelKind::Splr, Backend::Fxp16),
    ];
    let mut runs = Vec::new();
    for (model, backend) in variants {
        let mut c = cfg.clone();
        c.model = model;
        c.backend = backend;
        if model == ModelKind::Splr && backend != cfg.backend {
            // an explicit eta belongs to the configured backend only
            c.eta = None;
        }
        runs.push(train(&c, train_set, test_set)?.report);
    }
    let pct = |v: f64| 100.0 * v;
    let (elm_train, elm_test) = (runs[0].train.accuracy, runs[0].test.accuracy);
    let rows = runs
        .iter()
        .zip(variants)
        .map(|(r, (paradigm, precision))| CompareRow {
            paradigm,
            precision,
            train_accuracy: pct(r.train.accuracy),
            test_accuracy: pct(r.test.accuracy),
            train_gap_vs_elm: pct(elm_train - r.train.accuracy),
            test_gap_vs_elm: pct(elm_test - r.test.accuracy),
        })
        .collect();
    Ok(CompareReport {
        record: "compare",
        config: cfg.clone(),
        rows,
        fxp_test_gap_vs_real: pct(runs[2].test.accuracy - runs[3].test.accuracy),
        runs,
    })
}

pub fn render_compare(report: &CompareReport) -> String {
    let mut out = format!(
        "{:<8} {:<9} {:>9} {:>9} {:>14} {:>13}\n",
        "paradigm", "precision", "train_%", "test_%", "train_gap_elm", "test_gap_elm"
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{:<8} {:<9} {:>9.2} {:>9.2} {:>14.2} {:>13.2}\n",
            r.paradigm.to_string(),
            r.precision.to_string(),
            r.train_accuracy,
            r.test_accuracy,
            r.train_gap_vs_elm,
            r.test_gap_vs_elm
        ));
    }
    out.push_str(&format!(
        "splr fxp16 vs real test gap: {:.2} points\n",
        report.fxp_test_gap_vs_real
    ));
    out
}
