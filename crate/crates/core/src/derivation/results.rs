//! Final physical constants from per-run estimates or from summary inputs.

use std::collections::BTreeMap;

use super::{propagate_uncertainty, CorrectionLedger, Formula, Measured};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::inference::ResonanceFit;
use crate::physics;

/// Fitted quantities of one run. Angular frequencies in rad/s, rates in 1/s.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEstimate {
    pub run: usize,
    pub label: String,
    /// Optical frequency of the laser during this run (rad/s).
    pub optical_frequency: f64,
    pub delta_r: Measured<f64>,
    pub stark: Measured<f64>,
    pub leak_b: Measured<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunGamma {
    pub run: usize,
    pub label: String,
    pub detuning: f64,
    pub gamma_ps: Measured<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeriveOptions {
    /// Propagate the resonance zero-crossing uncertainty into γ_PS. Turn
    /// off when the ledger already carries a resonance-frequency row.
    pub resonance_uncertainty: bool,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        Self {
            resonance_uncertainty: true,
        }
    }
}

/// How the corrected decay rate was assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakdown {
    pub gamma_ps_raw: Measured<f64>,
    pub stat_rel: f64,
    pub resonance_rel: f64,
    pub ledger_shift: f64,
    pub ledger_rel: f64,
    pub runs: Vec<RunGamma>,
}

/// Decay rates (rad/s), lifetime (s) and matrix elements (e·a₀).
#[derive(Debug, Clone, PartialEq)]
pub struct FinalResults {
    pub gamma_ps: Measured<f64>,
    pub gamma_pd: Measured<f64>,
    pub leak_b: Measured<f64>,
    pub branching: Measured<f64>,
    pub lifetime: Measured<f64>,
    pub d_reduced: Measured<f64>,
    pub d_p32: Measured<f64>,
    pub breakdown: Option<Breakdown>,
}

impl FinalResults {
    fn assemble(
        gamma_ps: Measured<f64>,
        leak_b: Measured<f64>,
        constants: &PhysicalConstants<f64>,
        breakdown: Option<Breakdown>,
    ) -> Result<Self> {
        if !(gamma_ps.value > 0.0) {
            return Err(Error::InconsistentSign(format!(
                "derived gamma_ps = {} is not positive",
                gamma_ps.value
            )));
        }
        let p = |inputs: &[Measured<f64>], f| propagate_uncertainty(inputs, f, constants);
        let d_reduced = p(&[gamma_ps], Formula::MatrixElement)?;
        let out = Self {
            gamma_ps,
            gamma_pd: p(&[gamma_ps, leak_b], Formula::GammaPd)?,
            leak_b,
            branching: p(&[leak_b], Formula::Branching)?,
            lifetime: p(&[gamma_ps, leak_b], Formula::Lifetime)?,
            d_reduced,
            d_p32: d_reduced.scaled(std::f64::consts::SQRT_2),
            breakdown,
        };
        out.check_identities()?;
        Ok(out)
    }

    /// Branching, lifetime and √2 relations between the emitted numbers.
    pub fn check_identities(&self) -> Result<()> {
        let b = self.leak_b.value;
        let factor = 1.0 + b / 3.0;
        let branching_err = (self.branching.value - 1.0 / factor).abs();
        let inv_tau = 1.0 / self.lifetime.value;
        let tau_err = (inv_tau - self.gamma_ps.value * factor).abs() / inv_tau;
        let sqrt2_ok = self.d_p32.value == std::f64::consts::SQRT_2 * self.d_reduced.value;
        if branching_err > 1e-12 || tau_err > 1e-12 || !sqrt2_ok {
            return Err(Error::Model(format!(
                "result identities violated: branching {branching_err:e}, lifetime {tau_err:e}, sqrt2 {sqrt2_ok}"
            )));
        }
        Ok(())
    }
}

/// Inverse-variance weighted mean. Exact entries (zero uncertainty), if any,
/// dominate and are averaged with equal weight. Returns the weights used.
fn weighted_mean(xs: &[Measured<f64>]) -> (Measured<f64>, Vec<f64>) {
    let exact = xs.iter().any(|m| m.unc == 0.0);
    let weights: Vec<f64> = xs
        .iter()
        .map(|m| match (exact, m.unc == 0.0) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            _ => 1.0 / (m.unc * m.unc),
        })
        .collect();
    let sw: f64 = weights.iter().sum();
    let mean = xs.iter().zip(&weights).map(|(m, w)| w * m.value).sum::<f64>() / sw;
    let unc = if exact { 0.0 } else { 1.0 / sw.sqrt() };
    (Measured::new(mean, unc), weights.iter().map(|w| w / sw).collect())
}

/// Combines per-run estimates through the closure relation, averages,
/// applies the ledger shift once and adds its uncertainty in quadrature.
pub fn derive_results(
    estimates: &[RunEstimate],
    resonance: &ResonanceFit,
    ledger: &CorrectionLedger<f64>,
    constants: &PhysicalConstants<f64>,
    options: DeriveOptions,
) -> Result<FinalResults> {
    if estimates.is_empty() {
        return Err(Error::Input("no run estimates to combine".into()));
    }
    let mut label_sign: BTreeMap<&str, f64> = BTreeMap::new();
    let mut runs = Vec::with_capacity(estimates.len());
    for e in estimates {
        let detuning = e.optical_frequency - resonance.zero_crossing;
        if detuning == 0.0 {
            return Err(Error::Domain(format!("run {} sits on the fitted resonance", e.run)));
        }
        let sign = detuning.signum();
        if *label_sign.entry(e.label.as_str()).or_insert(sign) != sign {
            return Err(Error::Input(format!(
                "runs labelled `{}` fall on both sides of the fitted resonance",
                e.label
            )));
        }
        let gamma = propagate_uncertainty(
            &[Measured::exact(detuning), e.delta_r, e.stark],
            Formula::Closure,
            constants,
        )
        .map_err(|err| match err {
            Error::InconsistentSign(msg) => {
                Error::InconsistentSign(format!("run {} ({}): {msg}", e.run, e.label))
            }
            other => other,
        })?;
        runs.push(RunGamma {
            run: e.run,
            label: e.label.clone(),
            detuning,
            gamma_ps: gamma,
        });
    }
    let gammas: Vec<_> = runs.iter().map(|r| r.gamma_ps).collect();
    let (raw, weights) = weighted_mean(&gammas);
    // ∂γ_i/∂ω₀ = −γ_i/Δ_i since Δ_i = ω_i − ω₀.
    let slope: f64 = runs
        .iter()
        .zip(&weights)
        .map(|(r, w)| -w * r.gamma_ps.value / r.detuning)
        .sum();
    let resonance_abs = if options.resonance_uncertainty {
        (slope * resonance.zero_crossing_uncertainty).abs()
    } else {
        0.0
    };
    let stat_rel = raw.rel_unc();
    let resonance_rel = resonance_abs / raw.value.abs();
    let ledger_shift = ledger.total_shift();
    let ledger_rel = ledger.total_uncertainty();
    let total_rel = (stat_rel * stat_rel + resonance_rel * resonance_rel + ledger_rel * ledger_rel).sqrt();
    let corrected = raw.value * (1.0 + ledger_shift);
    let gamma_ps = Measured::new(corrected, corrected.abs() * total_rel);
    let (leak_b, _) = weighted_mean(&estimates.iter().map(|e| e.leak_b).collect::<Vec<_>>());
    if leak_b.value < 0.0 {
        return Err(Error::Domain(format!("averaged leak factor {} < 0", leak_b.value)));
    }
    FinalResults::assemble(
        gamma_ps,
        leak_b,
        constants,
        Some(Breakdown {
            gamma_ps_raw: raw,
            stat_rel,
            resonance_rel,
            ledger_shift,
            ledger_rel,
            runs,
        }),
    )
}

/// Final results from an already corrected decay rate and branching fraction.
pub fn derive_from_summary(
    gamma_ps: Measured<f64>,
    branching: Measured<f64>,
    constants: &PhysicalConstants<f64>,
) -> Result<FinalResults> {
    let leak_b = propagate_uncertainty(&[branching], Formula::LeakFromBranching, constants)?;
    let _ = physics::DecayConstants::from_leak_factor(gamma_ps.value, leak_b.value)?;
    FinalResults::assemble(gamma_ps, leak_b, constants, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TAU;

    fn line_fit(w0: f64, gamma: f64, w0_unc: f64) -> ResonanceFit {
        ResonanceFit {
            slope: 3.0 / gamma,
            slope_unc: 0.0,
            intercept: 0.0,
            intercept_unc: 0.0,
            x_center: w0,
            zero_crossing: w0,
            zero_crossing_uncertainty: w0_unc,
            chi2: 0.0,
            dof: 0,
        }
    }

    fn run(run: usize, label: &str, w: f64, w0: f64, gamma: f64, unc: f64) -> RunEstimate {
        let stark = 2.0e6 * (w - w0).signum();
        let delta_r = gamma * stark / (3.0 * (w - w0));
        RunEstimate {
            run,
            label: label.into(),
            optical_frequency: w,
            delta_r: Measured::new(delta_r, delta_r * unc),
            stark: Measured::new(stark, stark.abs() * unc),
            leak_b: Measured::new(0.206, 0.001),
        }
    }

    #[test]
    fn single_exact_run_reproduces_truth() {
        let gamma = TAU * 21.57e6;
        let w0 = TAU * 755.2e12;
        let e = run(0, "a", w0 - TAU * 12.03e9, w0, gamma, 0.0);
        let r = derive_results(
            &[e],
            &line_fit(w0, gamma, 0.0),
            &CorrectionLedger::empty(),
            &PhysicalConstants::reference(),
            DeriveOptions::default(),
        )
        .unwrap();
        assert!((r.gamma_ps.value - gamma).abs() / gamma < 1e-12);
        assert_eq!(r.gamma_ps.unc, 0.0);
    }

    #[test]
    fn ledger_shift_applied_once_to_average() {
        let gamma = TAU * 21.57e6;
        let w0 = TAU * 755.2e12;
        let es: Vec<_> = (0..4)
            .map(|i| run(i, if i % 2 == 0 { "a" } else { "b" }, w0 + TAU * 12e9 * if i % 2 == 0 { -1.0 } else { 1.0 }, w0, gamma, 1e-3))
            .collect();
        let ledger = CorrectionLedger::shipped();
        let r = derive_results(&es, &line_fit(w0, gamma, 0.0), &ledger, &PhysicalConstants::reference(), DeriveOptions::default()).unwrap();
        assert!((r.gamma_ps.value / gamma - 1.0036).abs() < 1e-12);
        let b = r.breakdown.unwrap();
        let expect = (b.stat_rel.powi(2) + 3.7047e-3f64.powi(2)).sqrt();
        assert!((r.gamma_ps.rel_unc() - expect).abs() < 1e-6);
    }

    #[test]
    fn resonance_uncertainty_cancels_for_symmetric_detunings() {
        let gamma = TAU * 21.57e6;
        let w0 = TAU * 755.2e12;
        let es = vec![
            run(0, "a", w0 - TAU * 12e9, w0, gamma, 1e-3),
            run(1, "b", w0 + TAU * 12e9, w0, gamma, 1e-3),
        ];
        let k = PhysicalConstants::reference();
        let e = CorrectionLedger::empty();
        let fit = line_fit(w0, gamma, TAU * 20e6);
        let r = derive_results(&es, &fit, &e, &k, DeriveOptions::default()).unwrap();
        assert!(r.breakdown.unwrap().resonance_rel < 1e-12);
        let one_sided = derive_results(&es[..1], &fit, &e, &k, DeriveOptions::default()).unwrap();
        let rel = one_sided.breakdown.unwrap().resonance_rel;
        assert!((rel - 20e6 / 12e9).abs() < 1e-9);
    }

    #[test]
    fn errors_for_empty_mixed_labels_and_wrong_sign() {
        let gamma = TAU * 21.57e6;
        let w0 = TAU * 755.2e12;
        let k = PhysicalConstants::reference();
        let e = CorrectionLedger::empty();
        let fit = line_fit(w0, gamma, 0.0);
        let o = DeriveOptions::default();
        assert!(matches!(derive_results(&[], &fit, &e, &k, o), Err(Error::Input(_))));
        let mixed = vec![
            run(0, "a", w0 - TAU * 12e9, w0, gamma, 1e-3),
            run(1, "a", w0 + TAU * 12e9, w0, gamma, 1e-3),
        ];
        assert!(matches!(derive_results(&mixed, &fit, &e, &k, o), Err(Error::Input(_))));
        let mut bad = run(0, "a", w0 - TAU * 12e9, w0, gamma, 1e-3);
        bad.stark.value = -bad.stark.value;
        assert!(matches!(derive_results(&[bad], &fit, &e, &k, o), Err(Error::InconsistentSign(_))));
    }

    #[test]
    fn summary_mode_lifetime_and_gamma_pd() {
        let r = derive_from_summary(
            Measured::new(TAU * 21.57e6, TAU * 0.08e6),
            Measured::new(0.93572, 0.00025),
            &PhysicalConstants::reference(),
        )
        .unwrap();
        assert!((r.lifetime.value * 1e9 - 6.904).abs() < 0.0005);
        assert!((r.gamma_pd.value / TAU / 1e6 - 1.482).abs() < 0.0005);
        assert!((r.branching.value - 0.93572).abs() < 1e-14);
        r.check_identities().unwrap();
    }
}
