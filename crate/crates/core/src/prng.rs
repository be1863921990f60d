//! LFSR weight generation.
//!
//! Input weights are never stored: each hidden neuron owns a 16-bit Galois
//! LFSR that is reseeded from the [`SeedPlan`] at the start of every sample
//! and replays the same weight row, so training and inference see identical
//! projections.

use thiserror::Error;

use crate::fxp::Fxp;

/// Feedback mask of the maximal-length polynomial x^16 + x^14 + x^13 + x^11 + 1.
pub const FEEDBACK_MASK: u16 = 0xB400;

/// Period of a maximal-length 16-bit LFSR.
pub const PERIOD: u32 = 65_535;

/// Multiplier used to spread neuron indices across the seed space.
const SEED_SPREAD: u32 = 0x9E37;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PrngError {
    #[error("LFSR state must be nonzero")]
    ZeroState,
    #[error("base seed must be nonzero")]
    ZeroSeed,
    #[error("neuron index {index} out of range for {count} neurons")]
    NeuronIndex { index: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LfsrState(u16);

impl LfsrState {
    pub fn new(state: u16) -> Result<Self, PrngError> {
        if state == 0 {
            Err(PrngError::ZeroState)
        } else {
            Ok(LfsrState(state))
        }
    }

    pub fn get(self) -> u16 {
        self.0
    }

    /// One Galois step: shift right; if the bit shifted out was set, XOR the
    /// feedback mask in. A nonzero state never maps to zero.
    #[inline]
    pub fn step(self) -> Self {
        let out = self.0 & 1;
        let mut s = self.0 >> 1;
        if out != 0 {
            s ^= FEEDBACK_MASK;
        }
        LfsrState(s)
    }
}

/// Checked form of [`LfsrState::step`] for raw register values.
pub fn lfsr_step(state: u16) -> Result<u16, PrngError> {
    Ok(LfsrState::new(state)?.step().get())
}

/// Maps a register value to a weight in `[-1.0, 0.99609375]`: the low nine
/// bits, offset by 256, read as a Q8.8 raw value.
#[inline]
pub fn weight_of(state: LfsrState) -> Fxp {
    Fxp::from_raw((state.0 & 0x1FF) as i16 - 256)
}

/// Steps the register and returns the weight of the new state.
#[inline]
pub fn gen_weight(state: LfsrState) -> (Fxp, LfsrState) {
    let next = state.step();
    (weight_of(next), next)
}

/// Infinite weight stream from a seed.
#[derive(Debug, Clone)]
pub struct WeightStream {
    state: LfsrState,
}

impl WeightStream {
    pub fn new(seed: LfsrState) -> Self {
        Self { state: seed }
    }
}

impl Iterator for WeightStream {
    type Item = Fxp;

    #[inline]
    fn next(&mut self) -> Option<Fxp> {
        let (w, s) = gen_weight(self.state);
        self.state = s;
        Some(w)
    }
}

/// Base seed plus neuron count; the sole source of model randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    base_seed: u16,
    neuron_count: usize,
}

impl SeedPlan {
    pub fn new(base_seed: u16, neuron_count: usize) -> Result<Self, PrngError> {
        if base_seed == 0 {
            return Err(PrngError::ZeroSeed);
        }
        Ok(Self {
            base_seed,
            neuron_count,
        })
    }

    pub fn base_seed(&self) -> u16 {
        self.base_seed
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    /// `base XOR low16(i * 0x9E37)`, with 0 remapped to 1.
    pub fn neuron_seed(&self, index: usize) -> Result<LfsrState, PrngError> {
        if index >= self.neuron_count {
            return Err(PrngError::NeuronIndex {
                index,
                count: self.neuron_count,
            });
        }
        Ok(self.seed_unchecked(index))
    }

    fn seed_unchecked(&self, index: usize) -> LfsrState {
        let spread = ((index as u32).wrapping_mul(SEED_SPREAD) & 0xFFFF) as u16;
        match self.base_seed ^ spread {
            0 => LfsrState(1),
            s => LfsrState(s),
        }
    }

    /// Fresh weight stream for neuron `index`, reseeded from the plan.
    pub fn stream(&self, index: usize) -> Result<WeightStream, PrngError> {
        Ok(WeightStream::new(self.neuron_seed(index)?))
    }

    /// The first `d` weights of neuron `index`.
    pub fn weight_row(&self, index: usize, d: usize) -> Result<Vec<Fxp>, PrngError> {
        Ok(self.stream(index)?.take(d).collect())
    }

    /// Input weights (`d` entries) followed by the bias, which is the next
    /// value of the same stream.
    pub fn neuron_params(&self, index: usize, d: usize) -> Result<(Vec<Fxp>, Fxp), PrngError> {
        let mut stream = self.stream(index)?;
        let row: Vec<Fxp> = stream.by_ref().take(d).collect();
        let bias = stream.next().expect("weight stream is infinite");
        Ok((row, bias))
    }
}
