//! Resonance frequency from the zero crossing of `y = Δ_S/δR` versus the
//! optical frequency. With `Δ = ω − ω₀`, the closure relation gives
//! `y = 3(ω − ω₀)/γ_PS`, a straight line through the resonance.

use crate::error::{Error, Result};

/// One run's contribution. Frequencies and shifts in rad/s, rates in 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonancePoint {
    pub optical_frequency: f64,
    pub stark: f64,
    pub stark_unc: f64,
    pub delta_r: f64,
    pub delta_r_unc: f64,
}

impl ResonancePoint {
    /// Ordinate `Δ_S/δR` and its first-order standard uncertainty.
    pub fn ordinate(&self) -> Result<(f64, f64)> {
        if self.delta_r == 0.0 {
            return Err(Error::Input("delta_r is zero".into()));
        }
        if self.stark == 0.0 {
            return Err(Error::Input("stark shift is zero".into()));
        }
        let y = self.stark / self.delta_r;
        let rel = (self.stark_unc / self.stark).hypot(self.delta_r_unc / self.delta_r);
        Ok((y, y.abs() * rel))
    }
}

/// Weighted straight-line fit `y = intercept + slope·(x − x_center)`.
///
/// `x_center` is the weighted mean abscissa, where slope and intercept are
/// uncorrelated. All frequencies are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceFit {
    pub slope: f64,
    pub slope_unc: f64,
    pub intercept: f64,
    pub intercept_unc: f64,
    pub x_center: f64,
    pub zero_crossing: f64,
    pub zero_crossing_uncertainty: f64,
    pub chi2: f64,
    pub dof: usize,
}

impl ResonanceFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * (x - self.x_center)
    }
}

pub fn fit_resonance(points: &[ResonancePoint]) -> Result<ResonanceFit> {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    let mut ws = Vec::with_capacity(points.len());
    for p in points {
        let (y, sy) = p.ordinate()?;
        if !(sy > 0.0 && sy.is_finite()) {
            return Err(Error::Input(format!(
                "ordinate uncertainty must be positive, got {sy}"
            )));
        }
        xs.push(p.optical_frequency);
        ys.push(y);
        ws.push(1.0 / (sy * sy));
    }
    let first = xs.first().copied().unwrap_or(0.0);
    if xs.iter().all(|x| *x == first) {
        return Err(Error::Singular("need at least two distinct optical frequencies".into()));
    }
    let sw: f64 = ws.iter().sum();
    // Center on the first point before forming the weighted mean so the
    // large absolute optical frequency does not enter the sums.
    let x_bar = first + xs.iter().zip(&ws).map(|(x, w)| w * (x - first)).sum::<f64>() / sw;
    let y_bar = ys.iter().zip(&ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - x_bar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Singular("zero spread in optical frequency".into()));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - x_bar) * (y - y_bar))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_bar;
    if slope == 0.0 {
        return Err(Error::Singular("fitted slope is zero, no zero crossing".into()));
    }
    let var_slope = 1.0 / sxx;
    let var_intercept = 1.0 / sw;
    let offset = -intercept / slope;
    let zero_crossing = x_bar + offset;
    // x₀ = x̄ − a/b with cov(a, b) = 0
    let zc_var = var_intercept / (slope * slope)
        + (intercept / (slope * slope)).powi(2) * var_slope;
    let chi2 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (y - intercept - slope * (x - x_bar)).powi(2))
        .sum();
    Ok(ResonanceFit {
        slope,
        slope_unc: var_slope.sqrt(),
        intercept,
        intercept_unc: var_intercept.sqrt(),
        x_center: x_bar,
        zero_crossing,
        zero_crossing_uncertainty: zc_var.sqrt(),
        chi2,
        dof: points.len().saturating_sub(2),
    })
}
