//! From fitted quantities to decay rates, lifetime and matrix elements.

mod ledger;
mod propagate;
mod results;

pub use ledger::{CorrectionLedger, LedgerRow, LEDGER_COLUMNS};
pub use propagate::{propagate_uncertainty, Formula};
pub use results::{
    derive_from_summary, derive_results, Breakdown, DeriveOptions, FinalResults, RunEstimate,
    RunGamma,
};

use crate::scalar::Real;

/// A value with its standard uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured<T> {
    pub value: T,
    pub unc: T,
}

impl<T: Real> Measured<T> {
    pub fn new(value: T, unc: T) -> Self {
        Self { value, unc }
    }

    pub fn exact(value: T) -> Self {
        Self {
            value,
            unc: T::zero(),
        }
    }

    pub fn rel_unc(&self) -> T {
        (self.unc / self.value).abs()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            value: self.value * factor,
            unc: self.unc * factor.abs(),
        }
    }
}
