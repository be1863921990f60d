//! SPLR-ELM: binary (Heaviside) hidden layer over LFSR-regenerated input
//! weights, a linear readout, and an error-driven update that adds `η` to
//! the true class column and subtracts it from the predicted class column
//! for every active hidden neuron, clipped to `[-w_max, w_max]`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, Classifier, Metrics, ModelError, Result};
use crate::counter::Tally;
use crate::datasets::{Dataset, Sample, NUM_CLASSES};
use crate::fxp::{Accumulator, Fxp};
use crate::prng::SeedPlan;

/// Samples used to calibrate the default threshold.
pub const CALIBRATION_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Real,
    Fxp16,
}

impl Backend {
    /// 0.01 for reals, one Q8.8 LSB for fixed point.
    pub fn default_eta(self) -> f64 {
        match self {
            Backend::Real => 0.01,
            Backend::Fxp16 => Fxp::LSB.to_real(),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Real => "real",
            Backend::Fxp16 => "fxp16",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "real" => Ok(Backend::Real),
            "fxp16" => Ok(Backend::Fxp16),
            other => Err(format!("unknown backend `{other}` (expected real or fxp16)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplrConfig {
    pub base_seed: u16,
    pub input_dim: usize,
    pub hidden: usize,
    pub threshold: f64,
    pub eta: f64,
    pub w_max: f64,
    pub backend: Backend,
}

/// Indices of the hidden neurons that fired, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct HiddenCode(Vec<u32>);

impl HiddenCode {
    pub fn from_active(mut active: Vec<u32>) -> Self {
        active.sort_unstable();
        active.dedup();
        HiddenCode(active)
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        HiddenCode(
            bits.iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i as u32)
                .collect(),
        )
    }

    pub fn active(&self) -> &[u32] {
        &self.0
    }

    pub fn popcount(&self) -> usize {
        self.0.len()
    }

    pub fn to_bits(&self, m: usize) -> Vec<bool> {
        let mut bits = vec![false; m];
        for &i in &self.0 {
            bits[i as usize] = true;
        }
        bits
    }
}

/// Hidden codes of a dataset paired with labels; the training loop replays
/// these instead of re-projecting every epoch (the codes are bitwise what
/// the regenerated weights produce).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub codes: Vec<HiddenCode>,
    pub labels: Vec<usize>,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Output weights, M x C row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputWeights {
    Real(Vec<f64>),
    Fxp(Vec<Fxp>),
}

impl OutputWeights {
    pub fn zeros(backend: Backend, m: usize) -> Self {
        match backend {
            Backend::Real => OutputWeights::Real(vec![0.0; m * NUM_CLASSES]),
            Backend::Fxp16 => OutputWeights::Fxp(vec![Fxp::ZERO; m * NUM_CLASSES]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            OutputWeights::Real(w) => w.len(),
            OutputWeights::Fxp(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        match self {
            OutputWeights::Real(w) => w[i * NUM_CLASSES + c],
            OutputWeights::Fxp(w) => w[i * NUM_CLASSES + c].to_real(),
        }
    }

    pub fn to_real(&self) -> Vec<f64> {
        match self {
            OutputWeights::Real(w) => w.clone(),
            OutputWeights::Fxp(w) => w.iter().map(|v| v.to_real()).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.to_real().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub updated: bool,
    pub predicted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub updates: usize,
    pub samples: usize,
    /// Fraction predicted correctly before each sample's own update.
    pub online_accuracy: f64,
}

/// Eight-lane dot product; the fixed lane order keeps every call path
/// bitwise identical.
#[inline]
fn dot_real(w: &[f64], x: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let wc = w.chunks_exact(8);
    let xc = x.chunks_exact(8);
    let (wr, xr) = (wc.remainder(), xc.remainder());
    for (a, b) in wc.zip(xc) {
        for k in 0..8 {
            lanes[k] += a[k] * b[k];
        }
    }
    let mut tail = 0.0;
    for (a, b) in wr.iter().zip(xr) {
        tail += a * b;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
        + tail
}

fn real_inputs(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

fn fxp_inputs(x: &[f32]) -> Vec<Fxp> {
    // Features are validated finite in [0, 1].
    x.iter()
        .map(|&v| Fxp::from_real(v as f64).unwrap_or(Fxp::ZERO))
        .collect()
}

/// Real-valued weight row and bias of neuron `i`.
fn real_params(plan: &SeedPlan, i: usize, d: usize) -> Result<(Vec<f64>, f64)> {
    let (row, bias) = plan.neuron_params(i, d)?;
    Ok((row.iter().map(|w| w.to_real()).collect(), bias.to_real()))
}

/// Real preactivations `w_in x + b` of every neuron for `samples`,
/// neuron-major (`out[i][n]`).
fn real_preactivations(plan: &SeedPlan, d: usize, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| real_inputs(&s.features)).collect();
    (0..plan.neuron_count())
        .into_par_iter()
        .map(|i| {
            let (row, bias) = real_params(plan, i, d)?;
            Ok(xs.iter().map(|x| dot_real(&row, x) + bias).collect())
        })
        .collect()
}

/// Median of the pooled real preactivations of the first
/// [`CALIBRATION_SAMPLES`] samples (mean of the two middle values for an
/// even count).
pub fn calibrate_threshold(plan: &SeedPlan, d: usize, samples: &[Sample]) -> Result<f64> {
    let head = &samples[..samples.len().min(CALIBRATION_SAMPLES)];
    if head.is_empty() || plan.neuron_count() == 0 {
        return Err(ModelError::Hyper("threshold calibration needs samples and neurons".into()));
    }
    let mut all: Vec<f64> = real_preactivations(plan, d, head)?.into_iter().flatten().collect();
    all.sort_unstable_by(f64::total_cmp);
    let n = all.len();
    Ok(if n % 2 == 1 {
        all[n / 2]
    } else {
        0.5 * (all[n / 2 - 1] + all[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplrModel {
    config: SplrConfig,
    plan: SeedPlan,
    eta_q: Fxp,
    w_max_q: Fxp,
    theta_acc: i64,
    weights: OutputWeights,
}

impl SplrModel {
    pub fn new(config: SplrConfig) -> Result<Self> {
        let weights = OutputWeights::zeros(config.backend, config.hidden);
        Self::from_parts(config, weights)
    }

    /// Rebuilds a model from its configuration and stored output weights.
    pub fn from_parts(config: SplrConfig, weights: OutputWeights) -> Result<Self> {
        if !(config.eta > 0.0 && config.eta.is_finite()) {
            return Err(ModelError::Hyper(format!("eta must be positive, got {}", config.eta)));
        }
        if !(config.w_max > 0.0 && config.w_max.is_finite()) {
            return Err(ModelError::Hyper(format!(
                "w_max must be positive, got {}",
                config.w_max
            )));
        }
        if config.threshold.is_nan() {
            return Err(ModelError::Hyper("threshold is NaN".into()));
        }
        let plan = SeedPlan::new(config.base_seed, config.hidden)?;
        let eta_q = Fxp::from_real(config.eta).map_err(|e| ModelError::Hyper(e.to_string()))?;
        let w_max_q = Fxp::from_real(config.w_max).map_err(|e| ModelError::Hyper(e.to_string()))?;
        if config.backend == Backend::Fxp16 && (eta_q == Fxp::ZERO || w_max_q == Fxp::ZERO) {
            return Err(ModelError::Hyper(
                "eta and w_max must be at least one Q8.8 LSB on the fxp16 backend".into(),
            ));
        }
        let expected = config.hidden * NUM_CLASSES;
        let backend_matches = matches!(
            (&weights, config.backend),
            (OutputWeights::Real(_), Backend::Real) | (OutputWeights::Fxp(_), Backend::Fxp16)
        );
        if weights.len() != expected || !backend_matches {
            return Err(ModelError::Dimension {
                expected,
                found: weights.len(),
            });
        }
        Ok(Self {
            theta_acc: Accumulator::threshold(config.threshold),
            config,
            plan,
            eta_q,
            w_max_q,
            weights,
        })
    }

    pub fn config(&self) -> &SplrConfig {
        &self.config
    }

    pub fn plan(&self) -> &SeedPlan {
        &self.plan
    }

    pub fn weights(&self) -> &OutputWeights {
        &self.weights
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden
    }

    fn check_dim(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(ModelError::Dimension {
                expected: self.config.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Binary hidden state of one sample. Each neuron's weight row is
    /// regenerated from its reseeded LFSR; no weight matrix is kept.
    pub fn hidden(&self, x: &[f32]) -> Result<HiddenCode> {
        self.check_dim(x)?;
        let d = self.config.input_dim;
        let mut active = Vec::new();
        match self.config.backend {
            Backend::Real => {
                let xr = real_inputs(x);
                for i in 0..self.config.hidden {
                    let (row, bias) = real_params(&self.plan, i, d)?;
                    if dot_real(&row, &xr) + bias > self.config.threshold {
                        active.push(i as u32);
                    }
                }
            }
            Backend::Fxp16 => {
                let xq = fxp_inputs(x);
                for i in 0..self.config.hidden {
                    let (row, bias) = self.plan.neuron_params(i, d)?;
                    if Accumulator::dot(&row, &xq).add_term(bias).raw() > self.theta_acc {
                        active.push(i as u32);
                    }
                }
            }
        }
        Ok(HiddenCode(active))
    }

    /// Hidden codes for a batch, computed neuron by neuron (one regenerated
    /// row applied to every sample). Bitwise equal to [`hidden`](Self::hidden)
    /// per sample.
    pub fn hidden_batch(&self, samples: &[Sample]) -> Result<Vec<HiddenCode>> {
        for s in samples {
            self.check_dim(&s.features)?;
        }
        let d = self.config.input_dim;
        let fired: Vec<Vec<bool>> = match self.config.backend {
            Backend::Real => {
                let theta = self.config.threshold;
                real_preactivations(&self.plan, d, samples)?
                    .into_iter()
                    .map(|pre| pre.into_iter().map(|z| z > theta).collect())
                    .collect()
            }
            Backend::Fxp16 => {
                let xs: Vec<Vec<Fxp>> = samples.iter().map(|s| fxp_inputs(&s.features)).collect();
                (0..self.config.hidden)
                    .into_par_iter()
                    .map(|i| {
                        let (row, bias) = self.plan.neuron_params(i, d)?;
                        Ok(xs
                            .iter()
                            .map(|x| Accumulator::dot(&row, x).add_term(bias).raw() > self.theta_acc)
                            .collect())
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mut codes = vec![Vec::new(); samples.len()];
        for (i, col) in fired.iter().enumerate() {
            for (n, &f) in col.iter().enumerate() {
                if f {
                    codes[n].push(i as u32);
                }
            }
        }
        Ok(codes.into_iter().map(HiddenCode).collect())
    }

    pub fn encode(&self, samples: &[Sample]) -> Result<EncodedSet> {
        Ok(EncodedSet {
            codes: self.hidden_batch(samples)?,
            labels: samples.iter().map(|s| s.label).collect(),
        })
    }

    /// Scores `o = hᵀW` by summing the rows of active neurons, and the
    /// lowest-index argmax.
    pub fn predict_code(&self, code: &HiddenCode) -> (Vec<f64>, usize) {
        let scores: Vec<f64> = match &self.weights {
            OutputWeights::Real(w) => {
                let mut o = [0.0f64; NUM_CLASSES];
                for &i in &code.0 {
                    let row = &w[i as usize * NUM_CLASSES..(i as usize + 1) * NUM_CLASSES];
                    for (oc, wc) in o.iter_mut().zip(row) {
                        *oc += wc;
                    }
                }
                o.to_vec()
            }
            OutputWeights::Fxp(w) => {
                let mut o = [0i64; NUM_CLASSES];
                for &i in &code.0 {
                    let row = &w[i as usize * NUM_CLASSES..(i as usize + 1) * NUM_CLASSES];
                    for (oc, wc) in o.iter_mut().zip(row) {
                        *oc += wc.raw() as i64;
                    }
                }
                o.iter().map(|&v| v as f64 / 256.0).collect()
            }
        };
        let y_hat = argmax(&scores);
        (scores, y_hat)
    }

    /// One online step on a precomputed hidden code. Tallies the update
    /// path only: the argmax comparisons and one add per weight write.
    pub fn step_code<T: Tally>(&mut self, code: &HiddenCode, y: usize, tally: &mut T) -> Result<StepOutcome> {
        if y >= NUM_CLASSES {
            return Err(ModelError::Label(y));
        }
        let (_, y_hat) = self.predict_code(code);
        tally.comparisons(NUM_CLASSES as u64 - 1);
        if y_hat == y {
            return Ok(StepOutcome {
                updated: false,
                predicted: y_hat,
            });
        }
        match &mut self.weights {
            OutputWeights::Real(w) => {
                let (eta, bound) = (self.config.eta, self.config.w_max);
                for &i in &code.0 {
                    let base = i as usize * NUM_CLASSES;
                    w[base + y] = (w[base + y] + eta).clamp(-bound, bound);
                    w[base + y_hat] = (w[base + y_hat] - eta).clamp(-bound, bound);
                }
            }
            OutputWeights::Fxp(w) => {
                let (eta, bound) = (self.eta_q, self.w_max_q);
                for &i in &code.0 {
                    let base = i as usize * NUM_CLASSES;
                    w[base + y] = (w[base + y] + eta).clamp_abs(bound);
                    w[base + y_hat] = (w[base + y_hat] - eta).clamp_abs(bound);
                }
            }
        }
        let writes = 2 * code.popcount() as u64;
        tally.adds(writes);
        tally.weight_writes(writes);
        Ok(StepOutcome {
            updated: true,
            predicted: y_hat,
        })
    }

    /// Projects `x`, predicts, and updates only on a misclassification.
    pub fn train_step(&mut self, x: &[f32], y: usize) -> Result<StepOutcome> {
        let code = self.hidden(x)?;
        self.step_code(&code, y, &mut ())
    }

    /// One pass over `set` in the order given by a ChaCha shuffle seeded
    /// with `shuffle_seed`.
    pub fn train_epoch<T: Tally>(
        &mut self,
        set: &EncodedSet,
        shuffle_seed: u64,
        tally: &mut T,
    ) -> Result<EpochStats> {
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let mut updates = 0;
        for &n in &order {
            if self.step_code(&set.codes[n], set.labels[n], tally)?.updated {
                updates += 1;
            }
        }
        let samples = set.len();
        Ok(EpochStats {
            epoch: 0,
            updates,
            samples,
            online_accuracy: if samples == 0 {
                0.0
            } else {
                (samples - updates) as f64 / samples as f64
            },
        })
    }

    /// Runs `epochs` passes; epoch `e` shuffles with `shuffle_seed + e`.
    pub fn fit<T: Tally>(
        &mut self,
        set: &EncodedSet,
        epochs: usize,
        shuffle_seed: u64,
        tally: &mut T,
    ) -> Result<Vec<EpochStats>> {
        (0..epochs)
            .map(|e| {
                let mut stats = self.train_epoch(set, shuffle_seed.wrapping_add(e as u64), tally)?;
                stats.epoch = e + 1;
                Ok(stats)
            })
            .collect()
    }

    pub fn evaluate_encoded(&self, set: &EncodedSet) -> Metrics {
        Metrics::from_pairs(
            set.codes
                .iter()
                .zip(&set.labels)
                .map(|(c, &y)| (y, self.predict_code(c).1)),
        )
    }
}

impl Classifier for SplrModel {
    fn predict(&self, x: &[f32]) -> Result<usize> {
        Ok(self.predict_code(&self.hidden(x)?).1)
    }

    fn predict_batch(&self, data: &Dataset) -> Result<Vec<usize>> {
        Ok(self
            .hidden_batch(data.samples())?
            .iter()
            .map(|c| self.predict_code(c).1)
            .collect())
    }
}
