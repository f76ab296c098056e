//! Spin-echo oscillation fit.
//!
//! Model: `q(t) = offset + contrast·exp(−decay·t)·cos(ω t + phase)`, with `ω`
//! the magnitude of the differential light shift. The frequency is seeded
//! from a periodogram of the mean-subtracted dark fractions, then all five
//! parameters are refined by Levenberg–Marquardt on binomial-weighted
//! residuals. Point variance is `max(q(1−q), 1/(4n))/n` at the current model.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::Deserialize;

use super::{Diagnostics, FitMethod, ParamSummary, PosteriorEstimate};
use crate::error::{Error, Result};
use crate::simulator::{ScanKind, ShotDataset};

pub const ECHO_PARAM_NAMES: [&str; 5] = ["stark", "contrast", "offset", "phase", "decay_rate"];

/// One point of an echo scan; `fraction` may be an expected (non-integer) value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoPoint {
    pub t: f64,
    pub shots: f64,
    pub fraction: f64,
}

/// How the oscillation frequency is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoInit {
    /// Periodogram on a grid oversampled by this factor.
    Periodogram { oversample: usize },
    /// Start from a known angular frequency (rad/s).
    Frequency(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoFitOptions {
    pub init: EchoInit,
    /// Minimum number of oscillation periods inside the scan window.
    pub min_periods: f64,
    /// A second periodogram peak at or above this fraction of the highest is ambiguous.
    pub ambiguity_ratio: f64,
}

impl Default for EchoFitOptions {
    fn default() -> Self {
        Self {
            init: EchoInit::Periodogram { oversample: 10 },
            min_periods: 3.0,
            ambiguity_ratio: 0.9,
        }
    }
}

pub fn fit_echo_scan(data: &ShotDataset, options: &EchoFitOptions) -> Result<PosteriorEstimate> {
    if data.kind() != ScanKind::Echo {
        return Err(Error::Input("echo fit needs an echo scan".into()));
    }
    let points: Vec<EchoPoint> = data
        .rows()
        .iter()
        .map(|r| EchoPoint {
            t: r.duration,
            shots: r.shots as f64,
            fraction: r.dark_fraction(),
        })
        .collect();
    fit_echo_points(&points, options)
}

pub fn fit_echo_points(points: &[EchoPoint], options: &EchoFitOptions) -> Result<PosteriorEstimate> {
    if points.len() < 6 {
        return Err(Error::Input("echo fit needs at least 6 points".into()));
    }
    if points.iter().any(|p| !(p.shots > 0.0 && p.t.is_finite() && p.fraction.is_finite())) {
        return Err(Error::Input("echo points need positive shots and finite values".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.t.total_cmp(&b.t));
    let window = pts[pts.len() - 1].t - pts[0].t;
    if !(window > 0.0) {
        return Err(Error::Input("echo scan has zero time span".into()));
    }

    let omega0 = match options.init {
        EchoInit::Frequency(w) => w.abs(),
        EchoInit::Periodogram { oversample } => periodogram_peak(&pts, oversample.max(1), options)?,
    };
    let periods = omega0 * window / std::f64::consts::TAU;
    if periods < options.min_periods {
        return Err(Error::Identifiability(format!(
            "about {periods:.2} periods in a {window:.3e} s window, need at least {}; extend the scan",
            options.min_periods
        )));
    }

    let start = linear_start(&pts, omega0)?;
    let (p, cov, converged) = levenberg_marquardt(&pts, start)?;
    let p = canonical(p);
    let params = ECHO_PARAM_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let sd = cov[(i, i)].max(0.0).sqrt();
            ParamSummary {
                name: (*name).to_string(),
                point: p[i],
                lo: p[i] - sd,
                hi: p[i] + sd,
                rhat: None,
            }
        })
        .collect();
    Ok(PosteriorEstimate {
        params,
        diagnostics: Diagnostics {
            method: FitMethod::LeastSquares,
            acceptance: Vec::new(),
            converged,
        },
        samples: Vec::new(),
    })
}

fn periodogram_peak(pts: &[EchoPoint], oversample: usize, options: &EchoFitOptions) -> Result<f64> {
    let n = pts.len();
    let window = pts[n - 1].t - pts[0].t;
    let mut spacings: Vec<f64> = pts.windows(2).map(|w| w[1].t - w[0].t).collect();
    spacings.sort_by(f64::total_cmp);
    let dt = spacings[spacings.len() / 2];
    let nyquist = std::f64::consts::PI / dt;
    let step = std::f64::consts::TAU / (window * oversample as f64);
    let mean = pts.iter().map(|p| p.fraction).sum::<f64>() / n as f64;
    let power = |w: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for p in pts {
            let y = p.fraction - mean;
            let (sn, cs) = (w * p.t).sin_cos();
            c += y * cs;
            s += y * sn;
        }
        c * c + s * s
    };
    let count = (nyquist / step).floor() as usize;
    if count < 3 {
        return Err(Error::Identifiability("scan too short for a periodogram".into()));
    }
    let grid: Vec<(f64, f64)> = (1..count).map(|k| (k as f64 * step, power(k as f64 * step))).collect();
    let mut peaks: Vec<(f64, f64)> = grid
        .windows(3)
        .filter(|w| w[1].1 > w[0].1 && w[1].1 >= w[2].1)
        .map(|w| w[1])
        .collect();
    if let (Some(first), Some(second)) = (grid.first(), grid.get(1)) {
        if first.1 > second.1 {
            peaks.push(*first);
        }
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let Some(&(best_w, best_p)) = peaks.first() else {
        return Err(Error::Identifiability("flat periodogram".into()));
    };
    if !(best_p > 0.0) {
        return Err(Error::Identifiability("flat periodogram".into()));
    }
    let rivals: Vec<f64> = peaks
        .iter()
        .skip(1)
        .filter(|(w, p)| *p >= options.ambiguity_ratio * best_p && (w - best_w).abs() > 1.5 * step)
        .map(|(w, _)| *w)
        .collect();
    if !rivals.is_empty() {
        let mut candidates = vec![best_w];
        candidates.extend(rivals);
        return Err(Error::AmbiguousPeriodogram { candidates });
    }
    Ok(golden_max(power, best_w - step, best_w + step, 60))
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Offset, contrast and phase from a linear fit at fixed frequency.
fn linear_start(pts: &[EchoPoint], omega: f64) -> Result<[f64; 5]> {
    let x = DMatrix::from_fn(pts.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (omega * pts[i].t).cos(),
        _ => (omega * pts[i].t).sin(),
    });
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.fraction));
    let beta = (x.transpose() * &x)
        .lu()
        .solve(&(x.transpose() * y))
        .ok_or_else(|| Error::Singular("echo start-value regression".into()))?;
    let (offset, a, b) = (beta[0], beta[1], beta[2]);
    Ok([omega, a.hypot(b), offset, (-b).atan2(a), 0.0])
}

fn model_and_grad(p: &[f64; 5], t: f64) -> (f64, [f64; 5]) {
    let [w, c, o, phi, g] = *p;
    let env = (-g * t).exp();
    let (sn, cs) = (w * t + phi).sin_cos();
    let m = o + c * env * cs;
    (
        m,
        [-c * env * t * sn, env * cs, 1.0, -c * env * sn, -t * c * env * cs],
    )
}

fn weight(m: f64, n: f64) -> f64 {
    let q = m.clamp(0.0, 1.0);
    n / (q * (1.0 - q)).max(0.25 / n)
}

type Mat5 = SMatrix<f64, 5, 5>;
type Vec5 = SVector<f64, 5>;

fn normal_equations(pts: &[EchoPoint], p: &[f64; 5], weights: &[f64]) -> (Mat5, Vec5, f64) {
    let mut jtj = Mat5::zeros();
    let mut jtr = Vec5::zeros();
    let mut cost = 0.0;
    for (pt, w) in pts.iter().zip(weights) {
        let (m, g) = model_and_grad(p, pt.t);
        let r = pt.fraction - m;
        let gv = Vec5::from_column_slice(&g);
        jtj += gv * gv.transpose() * *w;
        jtr += gv * (r * w);
        cost += w * r * r;
    }
    (jtj, jtr, cost)
}

fn weighted_cost(pts: &[EchoPoint], p: &[f64; 5], weights: &[f64]) -> f64 {
    pts.iter()
        .zip(weights)
        .map(|(pt, w)| {
            let r = pt.fraction - model_and_grad(p, pt.t).0;
            w * r * r
        })
        .sum()
}

fn levenberg_marquardt(pts: &[EchoPoint], start: [f64; 5]) -> Result<([f64; 5], Mat5, bool)> {
    let mut p = start;
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let weights: Vec<f64> = pts
            .iter()
            .map(|pt| weight(model_and_grad(&p, pt.t).0, pt.shots))
            .collect();
        let (jtj, jtr, cost) = normal_equations(pts, &p, &weights);
        if cost == 0.0 || jtr.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj;
            for i in 0..5 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..5 {
                trial[i] += step[i];
            }
            let new_cost = weighted_cost(pts, &trial, &weights);
            if new_cost.is_finite() && new_cost <= cost {
                let small = (0..5).all(|i| step[i].abs() <= 1e-14 * p[i].abs().max(1e-12));
                p = trial;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if small || cost - new_cost <= 1e-16 * cost {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: at the minimum to working precision.
            converged = true;
        }
        if converged || !improved {
            break;
        }
    }
    let weights: Vec<f64> = pts
        .iter()
        .map(|pt| weight(model_and_grad(&p, pt.t).0, pt.shots))
        .collect();
    let (jtj, _, _) = normal_equations(pts, &p, &weights);
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::Singular("echo fit information matrix".into()))?;
    Ok((p, cov, converged))
}

/// Positive frequency and contrast, phase in (−π, π].
fn canonical(mut p: [f64; 5]) -> [f64; 5] {
    use std::f64::consts::{PI, TAU};
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] = -p[3];
    }
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    p[3] = p[3] - TAU * ((p[3] + PI) / TAU).ceil() + TAU;
    if p[3] <= -PI {
        p[3] += TAU;
    }
    p
}
