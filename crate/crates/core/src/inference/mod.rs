//! Parameter estimation from shot data.
//!
//! * [`fit_flip_scan`]: adaptive random-walk Metropolis over spin-flip
//!   rates, leak factor and readout nuisances with a binomial likelihood.
//! * [`fit_echo_scan`]: periodogram-initialized weighted least squares for
//!   the spin-echo oscillation frequency.
//! * [`fit_resonance`]: weighted straight-line fit of `Δ_S/δR` against the
//!   optical frequency and its zero crossing.

mod echo;
mod flip;
pub mod mcmc;
mod optimize;
mod record;
mod resonance;

pub use echo::{fit_echo_points, fit_echo_scan, EchoFitOptions, EchoInit, EchoPoint, ECHO_PARAM_NAMES};
pub use flip::{
    fit_flip_scan, fit_flip_scan_in_block, flip_log_likelihood, FlipModel, FlipModelParams, FlipPrior, FLIP_PARAM_NAMES,
};
pub use mcmc::McmcConfig;
pub use record::{EstimateRecord, ESTIMATE_COLUMNS, ESTIMATE_HEADER};
pub use resonance::{fit_resonance, ResonanceFit, ResonancePoint};

/// Summary of one parameter: point estimate and central 68% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Split-chain potential scale reduction; `None` for non-sampling fits.
    pub rhat: Option<f64>,
}

impl ParamSummary {
    /// Half-width of the 68% interval, used as a standard uncertainty.
    pub fn std_unc(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Mcmc,
    LeastSquares,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Mcmc => "mcmc",
            FitMethod::LeastSquares => "least_squares",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub method: FitMethod,
    /// Per-chain acceptance rate after burn-in (empty for least squares).
    pub acceptance: Vec<f64>,
    /// False if any parameter exceeded the convergence threshold.
    pub converged: bool,
}

/// Result of a fit: per-parameter summaries, diagnostics and, for MCMC,
/// the retained draws (one row per draw, columns in `params` order).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimate {
    pub params: Vec<ParamSummary>,
    pub diagnostics: Diagnostics,
    pub samples: Vec<Vec<f64>>,
}

impl PosteriorEstimate {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub(crate) fn require(&self, name: &str) -> crate::Result<&ParamSummary> {
        self.get(name)
            .ok_or_else(|| crate::Error::Input(format!("estimate lacks parameter `{name}`")))
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.params.iter().position(|p| p.name == name)?;
        Some(self.samples.iter().map(|row| row[idx]).collect())
    }
}

/// Median and central 68% interval of a sample (sorted copy, linear interpolation).
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.158_655_253_931_457_05),
        quantile_sorted(&v, 0.841_344_746_068_542_9),
    )
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}
