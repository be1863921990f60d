//! Operation tallies threaded through the numeric kernels.
//!
//! Kernels are generic over [`Tally`]; the unit type `()` is the no-op tally
//! so uninstrumented calls compile to the plain loops.

use serde::Serialize;

pub trait Tally {
    fn adds(&mut self, _n: u64) {}
    fn mults(&mut self, _n: u64) {}
    fn comparisons(&mut self, _n: u64) {}
    fn weight_writes(&mut self, _n: u64) {}
}

impl Tally for () {}

/// Accumulated operation counts for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    pub adds: u64,
    pub mults: u64,
    pub comparisons: u64,
    pub weight_writes: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Arithmetic operations (adds + mults). Comparisons and writes are
    /// reported separately.
    pub fn arithmetic(&self) -> u64 {
        self.adds + self.mults
    }

    pub fn total(&self) -> u64 {
        self.adds + self.mults + self.comparisons
    }

    pub fn merge(&mut self, other: &OpCounter) {
        self.adds += other.adds;
        self.mults += other.mults;
        self.comparisons += other.comparisons;
        self.weight_writes += other.weight_writes;
    }
}

impl Tally for OpCounter {
    fn adds(&mut self, n: u64) {
        self.adds += n;
    }
    fn mults(&mut self, n: u64) {
        self.mults += n;
    }
    fn comparisons(&mut self, n: u64) {
        self.comparisons += n;
    }
    fn weight_writes(&mut self, n: u64) {
        self.weight_writes += n;
    }
}
