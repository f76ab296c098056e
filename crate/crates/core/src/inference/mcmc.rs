//! Adaptive random-walk Metropolis with split-R̂ diagnostics.
//!
//! During burn-in each chain adapts a multivariate Gaussian proposal: the
//! covariance tracks the empirical covariance of the chain (scaled by
//! 2.38²/d) and a global scale follows a Robbins–Monro update towards 23.4%
//! acceptance. Both are frozen once burn-in ends, so the retained draws come
//! from a fixed Markov kernel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub chains: usize,
    pub burn_in: usize,
    /// Retained draws per chain.
    pub draws: usize,
    /// Split-R̂ above this marks the result as unconverged.
    pub rhat_threshold: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            burn_in: 5000,
            draws: 20000,
            rhat_threshold: 1.05,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::config("mcmc.chains", "must be >= 1"));
        }
        if self.burn_in < 100 {
            return Err(Error::config("mcmc.burn_in", "must be >= 100"));
        }
        if self.draws < 4 {
            return Err(Error::config("mcmc.draws", "must be >= 4"));
        }
        if !(self.rhat_threshold > 1.0) {
            return Err(Error::config("mcmc.rhat_threshold", "must exceed 1"));
        }
        Ok(())
    }
}

/// Unnormalized log posterior; `-inf` outside the support.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub acceptance: f64,
}

const TARGET_ACCEPTANCE: f64 = 0.234;
const ADAPT_EVERY: usize = 50;

/// Runs one chain per start point, in parallel. Chain `c` draws from stream
/// `(seed, Mcmc, stream_block, c)`.
pub fn run_chains<D: LogDensity>(
    target: &D,
    starts: &[Vec<f64>],
    initial_cov: &DMatrix<f64>,
    config: &McmcConfig,
    seed: u64,
    stream_block: u32,
) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    let d = target.dim();
    if starts.iter().any(|s| s.len() != d) || initial_cov.nrows() != d || initial_cov.ncols() != d
    {
        return Err(Error::Input("start points or covariance have the wrong dimension".into()));
    }
    starts
        .par_iter()
        .enumerate()
        .map(|(c, start)| run_chain(target, start, initial_cov, config, seed, stream_block, c as u32))
        .collect()
}

fn run_chain<D: LogDensity>(
    target: &D,
    start: &[f64],
    initial_cov: &DMatrix<f64>,
    config: &McmcConfig,
    seed: u64,
    stream_block: u32,
    chain: u32,
) -> Result<ChainOutput> {
    let d = target.dim();
    let mut rng = rng::stream(seed, Domain::Mcmc, stream_block, chain);
    let mut x = DVector::from_column_slice(start);
    let mut lp = target.log_density(x.as_slice());
    if !lp.is_finite() {
        return Err(Error::Input(format!("chain {chain} starts outside the support")));
    }
    let base_scale = 2.38 * 2.38 / d as f64;
    let mut log_lambda = 0.0f64;
    let mut chol = proposal_factor(initial_cov, base_scale)?;

    // Running mean / covariance of the burn-in trajectory (Welford).
    let mut mean = x.clone();
    let mut m2 = DMatrix::<f64>::zeros(d, d);
    let mut seen = 1usize;

    let mut draws = Vec::with_capacity(config.draws);
    let mut accepted = 0usize;
    let total = config.burn_in + config.draws;
    for iter in 0..total {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let proposal = &x + (&chol * z) * log_lambda.exp();
        let lp_new = target.log_density(proposal.as_slice());
        let log_u: f64 = rng.random::<f64>().ln();
        let accept = lp_new.is_finite() && log_u < lp_new - lp;
        if accept {
            x = proposal;
            lp = lp_new;
        }
        if iter < config.burn_in {
            let a = if accept { 1.0 } else { 0.0 };
            let gain = 1.0 / ((iter + 1) as f64).powf(0.6);
            log_lambda += gain * (a - TARGET_ACCEPTANCE);

            seen += 1;
            let delta = &x - &mean;
            mean += &delta / seen as f64;
            let delta2 = &x - &mean;
            m2 += &delta * delta2.transpose();
            if (iter + 1) % ADAPT_EVERY == 0 && seen > 2 * d + 10 {
                let mut cov = &m2 / (seen - 1) as f64;
                for i in 0..d {
                    cov[(i, i)] += 1e-10 * cov[(i, i)].abs().max(1e-300);
                }
                if let Ok(f) = proposal_factor(&cov, base_scale) {
                    chol = f;
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.push(x.as_slice().to_vec());
        }
    }
    Ok(ChainOutput {
        draws,
        acceptance: accepted as f64 / config.draws as f64,
    })
}

fn proposal_factor(cov: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let scaled = cov * scale;
    scaled
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Model("proposal covariance is not positive definite".into()))
}

/// Split-R̂ (Gelman et al.) over equal-length chains of one scalar.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect();
    let m = halves.len() as f64;
    let n = halves.iter().map(|h| h.len()).min().unwrap_or(0) as f64;
    if n < 2.0 || m < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (h.len() as f64 - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}
