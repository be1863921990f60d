//! Binary weight checkpoints.
//!
//! Layout, little-endian: magic `SPLRELM1`, kind byte (0 splr, 1 elm),
//! backend byte (0 real, 1 fxp16), `D`, `M`, `C` as u32, `θ`, `η`,
//! `w_max` as f64, base seed as u16, then the M x C output weights row-major
//! (i16 raws for fxp16, f64 otherwise). Input weights are never stored; the
//! base seed regenerates them.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::datasets::NUM_CLASSES;
use crate::fxp::Fxp;
use crate::linalg::Matrix;
use crate::models::{Backend, ElmModel, ModelError, OutputWeights, SplrConfig, SplrModel};
use crate::prng::SeedPlan;

pub const MAGIC: &[u8; 8] = b"SPLRELM1";
const HEADER_LEN: usize = 8 + 2 + 12 + 24 + 2;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unknown {what} tag {tag}")]
    BadTag { what: &'static str, tag: u8 },
    #[error("checkpoint truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint has {0} classes, expected {NUM_CLASSES}")]
    Classes(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Splr(SplrModel),
    /// ELM or OS-ELM output weights over the LFSR projection.
    Elm {
        base_seed: u16,
        input_dim: usize,
        w_out: Matrix,
    },
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn i16(&mut self) -> i16 {
        i16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> usize {
        u32::from_le_bytes(self.take()) as usize
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let (kind, backend, d, m, theta, eta, w_max, seed) = match self {
            Checkpoint::Splr(model) => {
                let c = model.config();
                let tag = match c.backend {
                    Backend::Real => 0,
                    Backend::Fxp16 => 1,
                };
                (0u8, tag, c.input_dim, c.hidden, c.threshold, c.eta, c.w_max, c.base_seed)
            }
            Checkpoint::Elm {
                base_seed,
                input_dim,
                w_out,
            } => (1, 0, *input_dim, w_out.rows(), 0.0, 0.0, 0.0, *base_seed),
        };
        out.push(kind);
        out.push(backend);
        for v in [d, m, NUM_CLASSES] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in [theta, eta, w_max] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&seed.to_le_bytes());
        match self {
            Checkpoint::Splr(model) => match model.weights() {
                OutputWeights::Real(w) => w.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                OutputWeights::Fxp(w) => w.iter().for_each(|v| out.extend_from_slice(&v.raw().to_le_bytes())),
            },
            Checkpoint::Elm { w_out, .. } => {
                w_out.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()))
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if !bytes.starts_with(MAGIC) {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(CheckpointError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let mut r = Reader { bytes, pos: 8 };
        let (kind, backend) = (r.u8(), r.u8());
        let (d, m, c) = (r.u32(), r.u32(), r.u32());
        let (threshold, eta, w_max) = (r.f64(), r.f64(), r.f64());
        let base_seed = r.u16();
        if c != NUM_CLASSES {
            return Err(CheckpointError::Classes(c));
        }
        let backend = match backend {
            0 => Backend::Real,
            1 => Backend::Fxp16,
            tag => return Err(CheckpointError::BadTag { what: "backend", tag }),
        };
        let width = if kind == 0 && backend == Backend::Fxp16 { 2 } else { 8 };
        let expected = HEADER_LEN + m * c * width;
        if bytes.len() != expected {
            return Err(CheckpointError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        let n = m * c;
        match kind {
            0 => {
                let weights = match backend {
                    Backend::Real => OutputWeights::Real((0..n).map(|_| r.f64()).collect()),
                    Backend::Fxp16 => OutputWeights::Fxp((0..n).map(|_| Fxp::from_raw(r.i16())).collect()),
                };
                let config = SplrConfig {
                    base_seed,
                    input_dim: d,
                    hidden: m,
                    threshold,
                    eta,
                    w_max,
                    backend,
                };
                Ok(Checkpoint::Splr(SplrModel::from_parts(config, weights)?))
            }
            1 => {
                let data = (0..n).map(|_| r.f64()).collect();
                let w_out = Matrix::from_vec(m, c, data).map_err(ModelError::from)?;
                Ok(Checkpoint::Elm {
                    base_seed,
                    input_dim: d,
                    w_out,
                })
            }
            tag => Err(CheckpointError::BadTag { what: "kind", tag }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the ELM, regenerating its input weights from the seed.
    pub fn elm_model(&self) -> Result<Option<ElmModel>, CheckpointError> {
        match self {
            Checkpoint::Splr(_) => Ok(None),
            Checkpoint::Elm {
                base_seed,
                input_dim,
                w_out,
            } => {
                let plan = SeedPlan::new(*base_seed, w_out.rows()).map_err(ModelError::from)?;
                let mut elm = ElmModel::from_plan(&plan, *input_dim)?;
                elm.set_w_out(w_out.clone())?;
                Ok(Some(elm))
            }
        }
    }
}
