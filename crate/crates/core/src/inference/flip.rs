//! Bayesian fit of a pair of spin-flip scans (|↑⟩ and |↓⟩ initialization).
//!
//! The sampler works on `θ = (ln R₊, ln R₋, b, d↑, d↓)` where `d↑`, `d↓` are
//! the dark-event probabilities of the two spin states. The sink readout is
//! tied to one of them according to [`FlipPrior::sink`]. Priors: log-uniform
//! rates on `[rate_min, rate_max]`, uniform `b ∈ [0, leak_b_max]`, uniform
//! readout probabilities with `d↑ > d↓`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use super::mcmc::{run_chains, split_rhat, LogDensity, McmcConfig};
use super::optimize::{hessian, nelder_mead};
use super::{summarize, Diagnostics, FitMethod, ParamSummary, PosteriorEstimate};
use crate::dynamics::{evolve_analytic, DynamicsParams, Spin};
use crate::error::{Error, Result};
use crate::physics::RatePair;
use crate::rng::{self, Domain};
use crate::simulator::{ScanKind, ShotDataset, SinkReadout, SpamModel};

/// Reported parameters, in summary order.
pub const FLIP_PARAM_NAMES: [&str; 6] = [
    "r_plus",
    "r_minus",
    "leak_b",
    "dark_given_up",
    "dark_given_down",
    "delta_r",
];

const DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlipPrior {
    pub rate_min: f64,
    pub rate_max: f64,
    pub leak_b_max: f64,
    pub sink: SinkReadout,
}

impl Default for FlipPrior {
    fn default() -> Self {
        Self {
            rate_min: 1e-2,
            rate_max: 1e6,
            leak_b_max: 2.0,
            sink: SinkReadout::Bright,
        }
    }
}

impl FlipPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_min > 0.0 && self.rate_max > self.rate_min) {
            return Err(Error::config("prior.rate_min/rate_max", "need 0 < rate_min < rate_max"));
        }
        if !(self.leak_b_max > 0.0) {
            return Err(Error::config("prior.leak_b_max", "must be > 0"));
        }
        Ok(())
    }
}

/// Physical parameters of the flip-scan forward model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipModelParams {
    pub rates: RatePair<f64>,
    pub leak_b: f64,
    pub spam: SpamModel,
}

/// Log posterior over `θ` for one pair of scans.
pub struct FlipModel<'a> {
    up: &'a ShotDataset,
    down: &'a ShotDataset,
    prior: FlipPrior,
}

impl<'a> FlipModel<'a> {
    pub fn new(up: &'a ShotDataset, down: &'a ShotDataset, prior: FlipPrior) -> Result<Self> {
        prior.validate()?;
        if up.kind() != ScanKind::Flip(Spin::Up) || down.kind() != ScanKind::Flip(Spin::Down) {
            return Err(Error::Input("expected one up-initialized and one down-initialized flip scan".into()));
        }
        if up.meta().detuning_label != down.meta().detuning_label {
            return Err(Error::Input(format!(
                "detuning labels differ: `{}` vs `{}`",
                up.meta().detuning_label,
                down.meta().detuning_label
            )));
        }
        let mut a: Vec<f64> = up.durations().collect();
        let mut b: Vec<f64> = down.durations().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        if a != b {
            return Err(Error::Input("up and down scans use different duration grids".into()));
        }
        Ok(Self { up, down, prior })
    }

    pub fn params(&self, theta: &[f64]) -> Option<FlipModelParams> {
        let (lo, hi) = (self.prior.rate_min.ln(), self.prior.rate_max.ln());
        if !(theta[0] >= lo && theta[0] <= hi && theta[1] >= lo && theta[1] <= hi) {
            return None;
        }
        if !(theta[2] >= 0.0 && theta[2] <= self.prior.leak_b_max) {
            return None;
        }
        let spam = SpamModel::with_sink(theta[3], theta[4], self.prior.sink).ok()?;
        Some(FlipModelParams {
            rates: RatePair::new(theta[0].exp(), theta[1].exp()).ok()?,
            leak_b: theta[2],
            spam,
        })
    }

    /// Inverse of [`FlipModel::params`].
    pub fn theta(p: &FlipModelParams) -> [f64; DIM] {
        [
            p.rates.r_plus.ln(),
            p.rates.r_minus.ln(),
            p.leak_b,
            p.spam.dark_given_up(),
            p.spam.dark_given_down(),
        ]
    }

    pub fn log_likelihood(&self, p: &FlipModelParams) -> f64 {
        flip_log_likelihood(self.up, self.down, p).unwrap_or(f64::NEG_INFINITY)
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        match i {
            0 | 1 => (self.prior.rate_min.ln(), self.prior.rate_max.ln()),
            2 => (0.0, self.prior.leak_b_max),
            _ => (0.0, 1.0),
        }
    }
}

impl LogDensity for FlipModel<'_> {
    fn dim(&self) -> usize {
        DIM
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        // Flat in θ inside the support, so the posterior is the likelihood.
        match self.params(theta) {
            Some(p) => self.log_likelihood(&p),
            None => f64::NEG_INFINITY,
        }
    }
}

/// Binomial log-likelihood of both scans, dropping the `ln C(n, k)` constant.
pub fn flip_log_likelihood(
    up: &ShotDataset,
    down: &ShotDataset,
    p: &FlipModelParams,
) -> Result<f64> {
    let dynamics = DynamicsParams::new(p.rates, p.leak_b)?;
    let mut total = 0.0;
    for (data, init) in [(up, Spin::Up), (down, Spin::Down)] {
        for row in data.rows() {
            let pop = evolve_analytic(&dynamics, init, row.duration)?;
            let q = p.spam.dark_probability(&pop)?;
            let k = row.dark_count as f64;
            let miss = (row.shots - row.dark_count) as f64;
            if k > 0.0 {
                total += k * q.ln();
            }
            if miss > 0.0 {
                total += miss * (-q).ln_1p();
            }
        }
    }
    Ok(total)
}

/// Posterior over `(R₊, R₋, b, d↑, d↓)` and derived `δR = R₋ − R₊`.
/// Chains draw from stream block 0.
pub fn fit_flip_scan(
    up: &ShotDataset,
    down: &ShotDataset,
    prior: &FlipPrior,
    config: &McmcConfig,
    seed: u64,
) -> Result<PosteriorEstimate> {
    fit_flip_scan_in_block(up, down, prior, config, seed, 0)
}

pub fn fit_flip_scan_in_block(
    up: &ShotDataset,
    down: &ShotDataset,
    prior: &FlipPrior,
    config: &McmcConfig,
    seed: u64,
    block: u32,
) -> Result<PosteriorEstimate> {
    config.validate()?;
    let model = FlipModel::new(up, down, *prior)?;
    let mode = find_mode(&model)?;
    let cov = local_covariance(&model, &mode);
    let starts = dispersed_starts(&model, &mode, &cov, config.chains, seed, block);
    let chains = run_chains(&model, &starts, &cov, config, seed, block)?;

    let natural = |theta: &[f64]| -> [f64; 6] {
        let rp = theta[0].exp();
        let rm = theta[1].exp();
        [rp, rm, theta[2], theta[3], theta[4], rm - rp]
    };
    let per_chain: Vec<Vec<[f64; 6]>> = chains
        .iter()
        .map(|c| c.draws.iter().map(|t| natural(t)).collect())
        .collect();
    let mut params = Vec::with_capacity(FLIP_PARAM_NAMES.len());
    let mut converged = true;
    for (j, name) in FLIP_PARAM_NAMES.iter().enumerate() {
        let cols: Vec<Vec<f64>> = per_chain
            .iter()
            .map(|c| c.iter().map(|row| row[j]).collect())
            .collect();
        let pooled: Vec<f64> = cols.iter().flatten().copied().collect();
        let (median, lo, hi) = summarize(&pooled);
        let rhat = if cols.len() > 1 {
            split_rhat(&cols)
        } else {
            split_rhat(&[cols[0].clone()])
        };
        if !(rhat <= config.rhat_threshold) {
            converged = false;
        }
        params.push(ParamSummary {
            name: (*name).to_string(),
            point: median,
            lo,
            hi,
            rhat: Some(rhat),
        });
    }
    Ok(PosteriorEstimate {
        params,
        diagnostics: Diagnostics {
            method: FitMethod::Mcmc,
            acceptance: chains.iter().map(|c| c.acceptance).collect(),
            converged,
        },
        samples: per_chain.into_iter().flatten().map(|r| r.to_vec()).collect(),
    })
}

/// Posterior mode from a coarse rate grid followed by Nelder–Mead.
fn find_mode(model: &FlipModel<'_>) -> Result<[f64; DIM]> {
    let first = |d: &ShotDataset| {
        d.rows()
            .iter()
            .min_by(|a, b| a.duration.total_cmp(&b.duration))
            .map(|r| r.dark_fraction())
            .unwrap_or(0.5)
    };
    let a0 = first(model.up).clamp(0.55, 0.995);
    let c0 = first(model.down).clamp(0.005, 0.45);
    let b0 = 0.2f64.min(model.prior.leak_b_max / 2.0);

    let (lo, hi) = model.bounds(0);
    let grid_lo = lo.max((1e-1f64).ln());
    let steps = 16;
    let mut best = ([0.0; DIM], f64::NEG_INFINITY);
    for i in 0..steps {
        for j in 0..steps {
            let lp = grid_lo + (hi - grid_lo) * i as f64 / (steps - 1) as f64;
            let lm = grid_lo + (hi - grid_lo) * j as f64 / (steps - 1) as f64;
            let theta = [lp, lm, b0, a0, c0];
            let v = model.log_density(&theta);
            if v > best.1 {
                best = (theta, v);
            }
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Model("no finite likelihood on the starting grid".into()));
    }
    let neg = |t: &[f64]| -model.log_density(t);
    let mut x = best.0.to_vec();
    let mut scale = [0.5, 0.5, 0.05, 0.01, 0.01];
    for _ in 0..4 {
        let (nx, _) = nelder_mead(neg, &x, &scale, 4000, 1e-12);
        x = nx;
        scale = [0.05, 0.05, 0.01, 0.002, 0.002];
    }
    let mut out = [0.0; DIM];
    out.copy_from_slice(&x);
    Ok(out)
}

/// Inverse Hessian of the negative log posterior at the mode, or a diagonal
/// fallback if it is not positive definite.
fn local_covariance(model: &FlipModel<'_>, mode: &[f64; DIM]) -> DMatrix<f64> {
    let nominal: [f64; DIM] = [1e-3, 1e-3, 1e-3, 1e-4, 1e-4];
    let h: Vec<f64> = (0..DIM)
        .map(|i| {
            let (lo, hi) = model.bounds(i);
            let room = (mode[i] - lo).min(hi - mode[i]) * 0.5;
            nominal[i].min(room.max(1e-9))
        })
        .collect();
    let neg = |t: &[f64]| -model.log_density(t);
    let hm = hessian(neg, mode, &h);
    if hm.iter().all(|v| v.is_finite()) {
        if let Some(chol) = hm.clone().cholesky() {
            return chol.inverse();
        }
    }
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        DIM,
        (0..DIM).map(|i| {
            let d = hm[(i, i)];
            if d.is_finite() && d > 0.0 {
                1.0 / d
            } else {
                (nominal[i] * 10.0).powi(2)
            }
        }),
    ))
}

fn dispersed_starts(
    model: &FlipModel<'_>,
    mode: &[f64; DIM],
    cov: &DMatrix<f64>,
    chains: usize,
    seed: u64,
    block: u32,
) -> Vec<Vec<f64>> {
    let chol = cov.clone().cholesky().map(|c| c.l());
    (0..chains)
        .map(|c| {
            let mut rng = rng::stream(seed, Domain::ChainStart, block, c as u32);
            if let Some(l) = &chol {
                for _ in 0..100 {
                    let z = nalgebra::DVector::from_fn(DIM, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let x: Vec<f64> = mode
                        .iter()
                        .zip((l * z).iter())
                        .map(|(m, d)| m + 2.0 * d)
                        .collect();
                    if model.log_density(&x).is_finite() {
                        return x;
                    }
                }
            }
            mode.to_vec()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate_flip_scan, ScanPlan};
    use crate::{DecayConstants, LaserField, TAU};

    fn scans(seed: u64, shots: u32, n: usize) -> (ShotDataset, ShotDataset) {
        let field = LaserField::from_fractions(-TAU * 12.03e9, TAU * 440e6, 0.995, 0.005, 0.0).unwrap();
        let truth = DecayConstants::from_branching(TAU * 21.57e6, 0.93572).unwrap();
        let spam = SpamModel::with_sink(0.97, 0.03, SinkReadout::Bright).unwrap();
        let grid: Vec<f64> = (0..n).map(|i| 1e-3 * i as f64 / (n - 1) as f64).collect();
        let up = ScanPlan::new(grid.clone(), shots, ScanKind::Flip(Spin::Up), "a").unwrap();
        let down = ScanPlan::new(grid, shots, ScanKind::Flip(Spin::Down), "a").unwrap();
        (
            simulate_flip_scan(&field, &truth, &spam, &up, seed).unwrap(),
            simulate_flip_scan(&field, &truth, &spam, &down, seed + 1_000_000).unwrap(),
        )
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let (up, down) = scans(1, 100, 10);
        let prior = FlipPrior::default();
        assert!(FlipModel::new(&down, &up, prior).is_err());
        let (_, other_down) = scans(2, 100, 12);
        assert!(matches!(FlipModel::new(&up, &other_down, prior), Err(Error::Input(_))));
        let relabeled = ShotDataset::new(
            down.rows().to_vec(),
            crate::simulator::DatasetMeta::new(0, "b", ScanKind::Flip(Spin::Down)),
        )
        .unwrap();
        assert!(FlipModel::new(&up, &relabeled, prior).is_err());
    }

    #[test]
    fn support_boundaries() {
        let (up, down) = scans(1, 100, 10);
        let m = FlipModel::new(&up, &down, FlipPrior::default()).unwrap();
        assert!(m.log_density(&[5.0, 3.0, 0.2, 0.9, 0.1]).is_finite());
        assert_eq!(m.log_density(&[5.0, 3.0, -0.1, 0.9, 0.1]), f64::NEG_INFINITY);
        assert_eq!(m.log_density(&[5.0, 3.0, 0.2, 0.1, 0.9]), f64::NEG_INFINITY);
        assert_eq!(m.log_density(&[20.0, 3.0, 0.2, 0.9, 0.1]), f64::NEG_INFINITY);
    }

    #[test]
    fn recovers_rates_from_simulated_scans() {
        let (up, down) = scans(5, 2500, 30);
        let cfg = McmcConfig { chains: 4, burn_in: 2000, draws: 6000, rhat_threshold: 1.05 };
        let est = fit_flip_scan(&up, &down, &FlipPrior::default(), &cfg, 17).unwrap();
        assert!(est.diagnostics.converged, "{:?}", est.params);
        let field = LaserField::from_fractions(-TAU * 12.03e9, TAU * 440e6, 0.995, 0.005, 0.0).unwrap();
        let truth = crate::physics::spin_flip_rates(&field, TAU * 21.57e6).unwrap();
        let dr = est.get("delta_r").unwrap();
        assert!((dr.point - truth.delta_r()).abs() < 4.0 * dr.std_unc(), "{dr:?} vs {}", truth.delta_r());
        let b = est.get("leak_b").unwrap();
        assert!((b.point - 0.20609).abs() < 4.0 * b.std_unc(), "{b:?}");
        assert_eq!(est.samples.len(), 4 * 6000);
        for p in &est.params {
            assert!(p.lo <= p.point && p.point <= p.hi);
        }
    }
}
