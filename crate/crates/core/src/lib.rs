//! Radiative decay rates, lifetimes and reduced dipole matrix elements from
//! the ac Stark shift and the Raman spin-flip rates that one off-resonant
//! laser field drives on a trapped ion's ground-state Zeeman doublet.
//!
//! Layout:
//!
//! * [`physics`]: light shift, spin-flip and leak rates, closure relation,
//!   dipole matrix element.
//! * [`dynamics`]: rate-equation populations, analytic and RK4, and the
//!   spin-echo readout model.
//! * [`simulator`]: seeded synthetic datasets for flip scans, echo scans and
//!   interleaved measurement campaigns.
//! * [`inference`]: MCMC fit of flip scans, oscillation fit of echo scans,
//!   resonance regression.
//! * [`derivation`]: correction ledger, uncertainty propagation, final results.
//! * [`config`] and [`pipeline`]: the file-driven simulate/fit/derive/report workflow.
//!
//! The analytic kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod config;
pub mod constants;
pub mod derivation;
pub mod dynamics;
pub mod error;
pub mod inference;
pub mod physics;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod simulator;

pub use dynamics::Spin;
pub use error::{Error, Result};
pub use scalar::Real;

pub type LaserField = physics::LaserField<f64>;
pub type DecayConstants = physics::DecayConstants<f64>;
pub type RatePair = physics::RatePair<f64>;
pub type PhysicalConstants = constants::PhysicalConstants<f64>;
pub type PopulationState = dynamics::PopulationState<f64>;
pub type DynamicsParams = dynamics::DynamicsParams<f64>;
pub type EchoParams = dynamics::EchoParams<f64>;
pub type Measured = derivation::Measured<f64>;
pub type CorrectionLedger = derivation::CorrectionLedger<f64>;

/// `2π`, for Hz ↔ rad/s conversion at I/O boundaries.
pub const TAU: f64 = std::f64::consts::TAU;
