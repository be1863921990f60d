//! Run configuration as line-oriented `key=value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error. Every key has a default, so an empty file is a valid config.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::models::Backend;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Elm,
    Oselm,
    Splr,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Elm => "elm",
            ModelKind::Oselm => "oselm",
            ModelKind::Splr => "splr",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "elm" => Ok(ModelKind::Elm),
            "oselm" => Ok(ModelKind::Oselm),
            "splr" => Ok(ModelKind::Splr),
            other => Err(format!("unknown model `{other}` (expected elm, oselm or splr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Median preactivation over the first training samples.
    Median,
    Fixed(f64),
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdMode::Median => f.write_str("median"),
            ThresholdMode::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for ThresholdMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "median" {
            return Ok(ThresholdMode::Median);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .map(ThresholdMode::Fixed)
            .ok_or_else(|| format!("expected `median` or a number, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// `splr`.
    pub model: ModelKind,
    /// `fxp16`.
    pub backend: Backend,
    /// Hidden neurons, 1024.
    pub hidden: usize,
    /// SPLR epochs, 5.
    pub epochs: usize,
    /// Learning rate; unset means 0.01 (real) or 1/256 (fxp16).
    pub eta: Option<f64>,
    /// Clip bound, 8.0.
    pub w_max: f64,
    /// `median`.
    pub threshold: ThresholdMode,
    /// Ridge constant for ELM and OS-ELM, 1e-3.
    pub lambda: f64,
    /// OS-ELM initial batch size, 500.
    pub n0: usize,
    /// Training shuffle seed, 0.
    pub seed: u64,
    /// LFSR base seed, 0xACE1.
    pub base_seed: u16,
    /// Subsampling and noise seed, 0.
    pub data_seed: u64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Stratified training subset size, 5000; 0 keeps everything.
    pub subset_train: usize,
    /// Stratified test subset size, 1000; 0 keeps everything.
    pub subset_test: usize,
    /// Gaussian noise added to train and test features, off.
    pub noise_sigma: Option<f64>,
    /// Long-tailed (400 down to 200 per class) training set, off.
    pub long_tailed: bool,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Splr,
            backend: Backend::Fxp16,
            hidden: 1024,
            epochs: 5,
            eta: None,
            w_max: 8.0,
            threshold: ThresholdMode::Median,
            lambda: 1e-3,
            n0: 500,
            seed: 0,
            base_seed: 0xACE1,
            data_seed: 0,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            subset_train: 5000,
            subset_test: 1000,
            noise_sigma: None,
            long_tailed: false,
            out: None,
        }
    }
}

pub const KEYS: [&str; 21] = [
    "model",
    "backend",
    "hidden",
    "epochs",
    "eta",
    "w_max",
    "threshold",
    "lambda",
    "n0",
    "seed",
    "base_seed",
    "data_seed",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "subset_train",
    "subset_test",
    "noise_sigma",
    "long_tailed",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "must be positive and finite".into(),
        })
    }
}

fn parse_seed16(key: &str, value: &str) -> Result<u16, ConfigError> {
    let parsed = match value.strip_prefix("0x").or_else(|| value.strip_prefix("0X")) {
        Some(hex) => u16::from_str_radix(hex, 16).map_err(|e| e.to_string()),
        None => value.parse::<u16>().map_err(|e| e.to_string()),
    };
    match parsed {
        Ok(0) => Err("LFSR seed must be nonzero".to_string()),
        other => other,
    }
    .map_err(|reason| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason,
    })
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Effective learning rate for the configured backend.
    pub fn eta_or_default(&self) -> f64 {
        self.eta.unwrap_or_else(|| self.backend.default_eta())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "model" => self.model = parse(key, value)?,
            "backend" => self.backend = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "eta" => {
                self.eta = if value.is_empty() {
                    None
                } else {
                    Some(parse_positive(key, value)?)
                }
            }
            "w_max" => self.w_max = parse_positive(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "lambda" => {
                let v: f64 = parse(key, value)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        reason: "must be nonnegative and finite".into(),
                    });
                }
                self.lambda = v;
            }
            "n0" => self.n0 = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "base_seed" => self.base_seed = parse_seed16(key, value)?,
            "data_seed" => self.data_seed = parse(key, value)?,
            "train_images" => self.train_images = opt_path(value),
            "train_labels" => self.train_labels = opt_path(value),
            "test_images" => self.test_images = opt_path(value),
            "test_labels" => self.test_labels = opt_path(value),
            "subset_train" => self.subset_train = parse(key, value)?,
            "subset_test" => self.subset_test = parse(key, value)?,
            "noise_sigma" => {
                self.noise_sigma = if value.is_empty() {
                    None
                } else {
                    let v: f64 = parse(key, value)?;
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "must be nonnegative and finite".into(),
                        });
                    }
                    Some(v)
                }
            }
            "long_tailed" => self.long_tailed = parse(key, value)?,
            "out" => self.out = opt_path(value),
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        Some(match key {
            "model" => self.model.to_string(),
            "backend" => self.backend.to_string(),
            "hidden" => self.hidden.to_string(),
            "epochs" => self.epochs.to_string(),
            "eta" => self.eta.map_or(String::new(), |v| v.to_string()),
            "w_max" => self.w_max.to_string(),
            "threshold" => self.threshold.to_string(),
            "lambda" => self.lambda.to_string(),
            "n0" => self.n0.to_string(),
            "seed" => self.seed.to_string(),
            "base_seed" => format!("{:#06x}", self.base_seed),
            "data_seed" => self.data_seed.to_string(),
            "train_images" => path(&self.train_images),
            "train_labels" => path(&self.train_labels),
            "test_images" => path(&self.test_images),
            "test_labels" => path(&self.test_labels),
            "subset_train" => self.subset_train.to_string(),
            "subset_test" => self.subset_test.to_string(),
            "noise_sigma" => self.noise_sigma.map_or(String::new(), |v| v.to_string()),
            "long_tailed" => self.long_tailed.to_string(),
            "out" => path(&self.out),
            _ => return None,
        })
    }

    /// Applies `key=value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                text: raw.into(),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key).unwrap_or_default());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(RunConfig::from_text("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::from_text("# c\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn errors() {
        assert!(matches!(RunConfig::from_text("nope"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::from_text("colour=red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(RunConfig::from_text("eta=-1"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(RunConfig::from_text("base_seed=0"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(RunConfig::from_text("model=svm"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn eta_default_follows_backend() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.eta_or_default(), 1.0 / 256.0);
        cfg.backend = Backend::Real;
        assert_eq!(cfg.eta_or_default(), 0.01);
        cfg.set("eta", "0.5").unwrap();
        assert_eq!(cfg.eta_or_default(), 0.5);
    }

    proptest! {
        #[test]
        fn arbitrary_configs_round_trip(
            hidden in 1usize..5000,
            epochs in 0usize..50,
            eta in proptest::option::of(1e-4f64..2.0),
            theta in proptest::option::of(-10.0f64..10.0),
            base_seed in 1u16..,
            seed in any::<u64>(),
            sigma in proptest::option::of(0.0f64..1.0),
            tail in any::<bool>(),
            real in any::<bool>(),
        ) {
            let cfg = RunConfig {
                hidden,
                epochs,
                eta,
                threshold: theta.map_or(ThresholdMode::Median, ThresholdMode::Fixed),
                base_seed,
                seed,
                noise_sigma: sigma,
                long_tailed: tail,
                backend: if real { Backend::Real } else { Backend::Fxp16 },
                train_images: Some(PathBuf::from("/data/train-images")),
                ..RunConfig::default()
            };
            prop_assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
