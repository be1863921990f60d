//! Analytic cycle and throughput model of the streaming accelerator, and
//! measured operation counts for the ELM and SPLR training paths.
//!
//! One training sample costs `D` cycles to stream the input through the
//! hidden neurons, `M` cycles of in-training prediction, up to `M` cycles
//! of weight update and `P` pipeline cycles. Inference skips the update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::counter::OpCounter;
use crate::datasets::{Sample, NUM_CLASSES};
use crate::models::{calibrate_threshold, Backend, ElmModel, ModelError, SplrConfig, SplrModel};
use crate::prng::SeedPlan;

pub const DEFAULT_PIPELINE: u64 = 3;

#[derive(Debug, Error)]
pub enum CycleError {
    #[error("cycle count must be positive")]
    ZeroCycles,
    #[error("clock frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("need at least one hidden size")]
    NoSizes,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HwConfig {
    pub d: u64,
    pub m: u64,
    pub c: u64,
    pub p: u64,
    /// MHz.
    pub f_max: f64,
}

impl HwConfig {
    pub fn new(d: u64, m: u64, f_max: f64) -> Self {
        Self {
            d,
            m,
            c: NUM_CLASSES as u64,
            p: DEFAULT_PIPELINE,
            f_max,
        }
    }
}

/// `D + 2M + P`: every prediction wrong.
pub fn train_cycles_worst(cfg: &HwConfig) -> u64 {
    cfg.d + 2 * cfg.m + cfg.p
}

/// `D + M + P`.
pub fn infer_cycles(cfg: &HwConfig) -> u64 {
    cfg.d + cfg.m + cfg.p
}

/// Frames per second at `f_max` MHz.
pub fn fps(f_max: f64, cycles: u64) -> Result<f64, CycleError> {
    if cycles == 0 {
        return Err(CycleError::ZeroCycles);
    }
    if !(f_max > 0.0 && f_max.is_finite()) {
        return Err(CycleError::BadFrequency(f_max));
    }
    Ok(f_max * 1e6 / cycles as f64)
}

/// Throughput if the stages overlapped perfectly across samples, so the
/// longest stage sets the rate. An extrapolation beyond the worst-case
/// formulas.
pub fn pipelined_fps(cfg: &HwConfig) -> Result<f64, CycleError> {
    fps(cfg.f_max, cfg.d.max(cfg.m))
}

/// A reported hardware configuration and its published throughput.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportedRow {
    pub m: u64,
    pub f_max: f64,
    pub train_fps: Option<f64>,
    pub infer_fps: Option<f64>,
}

pub const REPORTED: [ReportedRow; 3] = [
    ReportedRow {
        m: 512,
        f_max: 230.7,
        train_fps: Some(199_700.0),
        infer_fps: None,
    },
    ReportedRow {
        m: 1024,
        f_max: 225.4,
        train_fps: Some(195_100.0),
        infer_fps: None,
    },
    ReportedRow {
        m: 1700,
        f_max: 224.0,
        train_fps: Some(63_454.0),
        infer_fps: Some(122_336.0),
    },
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRow {
    pub hw: HwConfig,
    pub train_cycles: u64,
    pub infer_cycles: u64,
    pub train_fps: f64,
    pub infer_fps: f64,
    pub pipelined_fps: f64,
    pub reported_train_fps: Option<f64>,
    pub reported_infer_fps: Option<f64>,
}

pub fn cycle_table(d: u64, p: u64) -> Result<Vec<CycleRow>, CycleError> {
    REPORTED
        .iter()
        .map(|r| {
            let hw = HwConfig {
                p,
                ..HwConfig::new(d, r.m, r.f_max)
            };
            let (tc, ic) = (train_cycles_worst(&hw), infer_cycles(&hw));
            Ok(CycleRow {
                hw,
                train_cycles: tc,
                infer_cycles: ic,
                train_fps: fps(hw.f_max, tc)?,
                infer_fps: fps(hw.f_max, ic)?,
                pipelined_fps: pipelined_fps(&hw)?,
                reported_train_fps: r.train_fps,
                reported_infer_fps: r.infer_fps,
            })
        })
        .collect()
}

pub const DISCREPANCY_NOTE: &str = "note: reported speeds do not follow from D + 2M + P (train) and \
D + M + P (infer) cycles per sample at the reported clock; the overlap that would reconcile them is \
unspecified, so both are shown unreconciled. The pipelined column assumes perfect stage overlap and \
is an extrapolation.";

/// Aligned text rendering of [`cycle_table`].
pub fn render_cycle_table(rows: &[CycleRow]) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.0}"));
    let mut out = format!(
        "{:>6} {:>8} {:>10} {:>10} {:>11} {:>11} {:>13} {:>13} {:>13}\n",
        "M", "f_MHz", "T_train", "T_infer", "train_fps", "infer_fps", "pipelined_fps", "reported_trn", "reported_inf"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>6} {:>8.1} {:>10} {:>10} {:>11.0} {:>11.0} {:>13.0} {:>13} {:>13}\n",
            r.hw.m,
            r.hw.f_max,
            r.train_cycles,
            r.infer_cycles,
            r.train_fps,
            r.infer_fps,
            r.pipelined_fps,
            opt(r.reported_train_fps),
            opt(r.reported_infer_fps),
        ));
    }
    out.push_str(DISCREPANCY_NOTE);
    out.push('\n');
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub m: usize,
    /// Normal-equation formation `HᵀH + λI`, `HᵀT`.
    pub elm_form: OpCounter,
    /// Factorization and triangular solves.
    pub elm_solve: OpCounter,
    pub splr_updates: usize,
    /// Update-path operations (adds, mults, comparisons) summed over
    /// misclassified samples.
    pub splr_update_ops: OpCounter,
    pub splr_ops_per_update: f64,
    pub splr_max_ops_per_update: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
    pub elm_solve_slope: f64,
    pub splr_update_slope: f64,
}

pub const COMPLEXITY_DIM: usize = 32;
pub const COMPLEXITY_SAMPLES: usize = 600;

/// The fixed dataset used by [`complexity_report`]: uniform features with
/// random labels, so misclassifications never run out.
pub fn complexity_dataset(seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..COMPLEXITY_SAMPLES)
        .map(|_| Sample {
            features: (0..COMPLEXITY_DIM).map(|_| rng.random::<f32>()).collect(),
            label: rng.random_range(0..NUM_CLASSES),
        })
        .collect()
}

/// Instrumented ELM fit and one SPLR epoch (fxp16) at each `M`.
pub fn complexity_report(m_values: &[usize], base_seed: u16) -> Result<ComplexityReport, CycleError> {
    if m_values.is_empty() {
        return Err(CycleError::NoSizes);
    }
    let data = complexity_dataset(base_seed as u64);
    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let plan = SeedPlan::new(base_seed, m).map_err(ModelError::from)?;
        let mut elm = ElmModel::from_plan(&plan, COMPLEXITY_DIM)?;
        let (mut form, mut solve) = (OpCounter::new(), OpCounter::new());
        elm.fit_counted(&data, 1e-3, &mut form, &mut solve)?;

        let threshold = calibrate_threshold(&plan, COMPLEXITY_DIM, &data)?;
        let mut splr = SplrModel::new(SplrConfig {
            base_seed,
            input_dim: COMPLEXITY_DIM,
            hidden: m,
            threshold,
            eta: Backend::Fxp16.default_eta(),
            w_max: 8.0,
            backend: Backend::Fxp16,
        })?;
        let set = splr.encode(&data)?;
        let mut total = OpCounter::new();
        let (mut updates, mut worst) = (0, 0);
        for (code, &y) in set.codes.iter().zip(&set.labels) {
            let mut step = OpCounter::new();
            if splr.step_code(code, y, &mut step)?.updated {
                updates += 1;
                worst = worst.max(step.total());
                total.merge(&step);
            }
        }
        rows.push(ComplexityRow {
            m,
            elm_form: form,
            elm_solve: solve,
            splr_updates: updates,
            splr_update_ops: total,
            splr_ops_per_update: total.total() as f64 / updates.max(1) as f64,
            splr_max_ops_per_update: worst,
        });
    }
    let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let elm: Vec<f64> = rows.iter().map(|r| r.elm_solve.arithmetic() as f64).collect();
    let splr: Vec<f64> = rows.iter().map(|r| r.splr_ops_per_update).collect();
    let (elm_solve_slope, splr_update_slope) = if rows.len() > 1 {
        (loglog_slope(&ms, &elm), loglog_slope(&ms, &splr))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ComplexityReport {
        rows,
        elm_solve_slope,
        splr_update_slope,
    })
}

pub fn render_complexity(report: &ComplexityReport) -> String {
    let mut out = format!(
        "{:>6} {:>14} {:>14} {:>10} {:>14} {:>12}\n",
        "M", "elm_form_ops", "elm_solve_ops", "splr_upd", "ops/update", "splr_mults"
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{:>6} {:>14} {:>14} {:>10} {:>14.1} {:>12}\n",
            r.m,
            r.elm_form.arithmetic(),
            r.elm_solve.arithmetic(),
            r.splr_updates,
            r.splr_ops_per_update,
            r.splr_update_ops.mults,
        ));
    }
    out.push_str(&format!(
        "log-log slope: elm solve {:.3}, splr update {:.3}\n",
        report.elm_solve_slope, report.splr_update_slope
    ));
    out
}
