//! IDX ingestion and the dataset transforms used by the benchmarks:
//! stratified subsets, additive Gaussian noise and a long-tailed
//! (linearly decreasing) class imbalance.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is not below {NUM_CLASSES}")]
    BadLabel { index: usize, label: u8 },
    #[error("requested {requested} samples but only {available} available")]
    TooFew { requested: usize, available: usize },
    #[error("class {class} has {available} samples, {requested} required")]
    ClassTooSmall {
        class: usize,
        requested: usize,
        available: usize,
    },
    #[error("noise sigma must be finite and nonnegative, got {0}")]
    BadSigma(f64),
    #[error("dataset is empty")]
    Empty,
    #[error("sample {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("sample {index} has feature {value} outside [0, 1]")]
    FeatureRange { index: usize, value: f32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f32>,
    pub label: usize,
}

/// A nonempty, immutable list of equal-dimension samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Validates the sample invariants: nonempty, one dimension, features in
    /// `[0, 1]`, labels below [`NUM_CLASSES`].
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self, DatasetError> {
        let dim = samples.first().ok_or(DatasetError::Empty)?.features.len();
        for (index, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(DatasetError::Dimension {
                    index,
                    expected: dim,
                    found: s.features.len(),
                });
            }
            if s.label >= NUM_CLASSES {
                return Err(DatasetError::BadLabel {
                    index,
                    label: s.label as u8,
                });
            }
            if let Some(&value) = s.features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(DatasetError::FeatureRange { index, value });
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            samples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Splits off the first `n` samples (clamped to the length).
    pub fn split_at(&self, n: usize) -> (Vec<Sample>, Vec<Sample>) {
        let n = n.min(self.len());
        (self.samples[..n].to_vec(), self.samples[n..].to_vec())
    }

    fn renamed(&self, suffix: &str, samples: Vec<Sample>) -> Result<Self, DatasetError> {
        Dataset::new(format!("{}{}", self.name, suffix), samples)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DatasetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DatasetError::Truncated {
            path: path.to_path_buf(),
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), DatasetError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(DatasetError::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>), DatasetError> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((count, rows, cols, bytes[16..expected].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DatasetError> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

/// Loads an image/label IDX pair; pixels are scaled by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DatasetError> {
    let (count, rows, cols, pixels) = parse_idx_images(&read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read(labels_path)?, labels_path)?;
    if labels.len() != count {
        return Err(DatasetError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let dim = rows * cols;
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            if label as usize >= NUM_CLASSES {
                return Err(DatasetError::BadLabel { index: i, label });
            }
            let features = pixels[i * dim..(i + 1) * dim]
                .iter()
                .map(|&p| p as f32 / 255.0)
                .collect();
            Ok(Sample {
                features,
                label: label as usize,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, samples)
}

/// Encodes samples back to an IDX pair; features are rounded to bytes.
pub fn encode_idx(samples: &[Sample], rows: usize, cols: usize) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + samples.len() * rows * cols);
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut labels = Vec::with_capacity(8 + samples.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    for s in samples {
        images.extend(s.features.iter().map(|&f| (f * 255.0).round() as u8));
        labels.push(s.label as u8);
    }
    (images, labels)
}

/// Deterministic subset of `n` samples. With `stratified`, per-class counts
/// are `n / C` plus one for the first `n % C` classes (in class order); the
/// result is shuffled.
pub fn subsample(d: &Dataset, n: usize, seed: u64, stratified: bool) -> Result<Dataset, DatasetError> {
    if n > d.len() {
        return Err(DatasetError::TooFew {
            requested: n,
            available: d.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = if stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
        for (i, s) in d.iter().enumerate() {
            by_class[s.label].push(i);
        }
        let mut out = Vec::with_capacity(n);
        for (class, idx) in by_class.iter_mut().enumerate() {
            let want = n / NUM_CLASSES + usize::from(class < n % NUM_CLASSES);
            if idx.len() < want {
                return Err(DatasetError::ClassTooSmall {
                    class,
                    requested: want,
                    available: idx.len(),
                });
            }
            idx.shuffle(&mut rng);
            out.extend_from_slice(&idx[..want]);
        }
        out
    } else {
        let mut all: Vec<usize> = (0..d.len()).collect();
        all.shuffle(&mut rng);
        all.truncate(n);
        all
    };
    picked.shuffle(&mut rng);
    let samples = picked.into_iter().map(|i| d.samples[i].clone()).collect();
    d.renamed(&format!("[{n}]"), samples)
}

/// `clip(x + N(0, sigma^2), 0, 1)` on every feature; labels unchanged.
pub fn add_gaussian_noise(d: &Dataset, sigma: f64, seed: u64) -> Result<Dataset, DatasetError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DatasetError::BadSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(d.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| DatasetError::BadSigma(sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = d
        .iter()
        .map(|s| Sample {
            features: s
                .features
                .iter()
                .map(|&f| (f as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32)
                .collect(),
            label: s.label,
        })
        .collect();
    d.renamed(&format!("+noise({sigma})"), samples)
}

/// Per-class counts of the linear ramp from `major` (class 0) down to
/// `minor` (class C-1), rounding half up.
pub fn long_tail_counts(major: usize, minor: usize) -> [usize; NUM_CLASSES] {
    let step = (major as f64 - minor as f64) / (NUM_CLASSES - 1) as f64;
    let mut counts = [0; NUM_CLASSES];
    for (k, c) in counts.iter_mut().enumerate() {
        *c = (major as f64 - k as f64 * step + 0.5).floor() as usize;
    }
    counts
}

/// Keeps the first `long_tail_counts(major, minor)[k]` samples of each class
/// `k`, preserving dataset order.
pub fn make_long_tailed(d: &Dataset, major: usize, minor: usize) -> Result<Dataset, DatasetError> {
    let want = long_tail_counts(major, minor);
    let have = d.class_counts();
    for class in 0..NUM_CLASSES {
        if have[class] < want[class] {
            return Err(DatasetError::ClassTooSmall {
                class,
                requested: want[class],
                available: have[class],
            });
        }
    }
    let mut taken = [0; NUM_CLASSES];
    let samples = d
        .iter()
        .filter(|s| {
            let keep = taken[s.label] < want[s.label];
            taken[s.label] += usize::from(keep);
            keep
        })
        .cloned()
        .collect();
    d.renamed(&format!("+longtail({major}->{minor})"), samples)
}
