//! Text renderings: parenthesis uncertainty notation, key/value records and
//! plot-ready CSV tables.

use std::fmt::Write as _;

use crate::derivation::{CorrectionLedger, FinalResults, Measured};
use crate::dynamics::{evolve_analytic, DynamicsParams, EchoParams, Spin};
use crate::error::{Error, Result};
use crate::inference::{ResonanceFit, ResonancePoint};
use crate::simulator::{ScanKind, ShotDataset, SpamModel};
use crate::TAU;

pub const RESULTS_HEADER: &str = "# iondyne-results v1";
pub const RESONANCE_HEADER: &str = "# iondyne-resonance v1";
pub const SUMMARY_HEADER: &str = "# iondyne-report v1";

/// `value(unc)` with two significant digits of uncertainty, e.g. `6.904(26)`.
pub fn paren(value: f64, unc: f64) -> String {
    if !value.is_finite() || !unc.is_finite() || unc < 0.0 {
        return format!("{value} +/- {unc}");
    }
    if unc == 0.0 {
        return format!("{value}(0)");
    }
    let mut decimals = 1 - unc.log10().floor() as i32;
    let mut digits = (unc * 10f64.powi(decimals)).round();
    if digits >= 100.0 {
        decimals -= 1;
        digits = (unc * 10f64.powi(decimals)).round();
    }
    if decimals >= 0 {
        format!("{:.*}({})", decimals as usize, value, digits as i64)
    } else {
        let scale = 10f64.powi(-decimals);
        format!("{:.0}({:.0})", (value / scale).round() * scale, digits * scale)
    }
}

/// Ordered `key = value` lines under a fixed header line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    /// Machine field in shortest round-trip form.
    pub fn push_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.push(key, format!("{value:e}"))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::parse(key, "missing key"))?;
        raw.parse()
            .map_err(|_| Error::parse(key, format!("`{raw}` is not a number")))
    }

    pub fn render(&self, header: &str) -> String {
        let mut out = format!("{header}\n");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str, header: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == header => {}
            _ => return Err(Error::parse("line 1", format!("expected `{header}`"))),
        }
        let mut kv = Self::new();
        for (i, l) in lines {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l
                .split_once(" = ")
                .ok_or_else(|| Error::parse(format!("line {}", i + 1), "expected `key = value`"))?;
            kv.push(k.trim(), v.trim());
        }
        Ok(kv)
    }
}

pub fn resonance_to_kv(fit: &ResonanceFit) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push_f64("slope_s", fit.slope)
        .push_f64("slope_unc_s", fit.slope_unc)
        .push_f64("intercept", fit.intercept)
        .push_f64("intercept_unc", fit.intercept_unc)
        .push_f64("x_center_rad_s", fit.x_center)
        .push_f64("zero_crossing_rad_s", fit.zero_crossing)
        .push_f64("zero_crossing_unc_rad_s", fit.zero_crossing_uncertainty)
        .push_f64("chi2", fit.chi2)
        .push("dof", fit.dof)
        .push("zero_crossing_thz", format!("{:.9}", fit.zero_crossing / TAU / 1e12))
        .push("zero_crossing_unc_mhz", format!("{:.3}", fit.zero_crossing_uncertainty / TAU / 1e6));
    kv
}

pub fn resonance_from_kv(kv: &KeyValues) -> Result<ResonanceFit> {
    Ok(ResonanceFit {
        slope: kv.get_f64("slope_s")?,
        slope_unc: kv.get_f64("slope_unc_s")?,
        intercept: kv.get_f64("intercept")?,
        intercept_unc: kv.get_f64("intercept_unc")?,
        x_center: kv.get_f64("x_center_rad_s")?,
        zero_crossing: kv.get_f64("zero_crossing_rad_s")?,
        zero_crossing_uncertainty: kv.get_f64("zero_crossing_unc_rad_s")?,
        chi2: kv.get_f64("chi2")?,
        dof: kv.get_f64("dof")? as usize,
    })
}

const RESULT_FIELDS: [(&str, &str); 7] = [
    ("gamma_ps", "rad_s"),
    ("gamma_pd", "rad_s"),
    ("leak_b", "1"),
    ("branching_fraction", "1"),
    ("lifetime", "s"),
    ("d_reduced", "e_a0"),
    ("d_p32", "e_a0"),
];

fn result_values(r: &FinalResults) -> [Measured<f64>; 7] {
    [
        r.gamma_ps,
        r.gamma_pd,
        r.leak_b,
        r.branching,
        r.lifetime,
        r.d_reduced,
        r.d_p32,
    ]
}

/// Derive-stage record: full-precision machine fields plus human fields in
/// parenthesis notation.
pub fn results_to_kv(
    r: &FinalResults,
    ledger: &CorrectionLedger<f64>,
    generated_at: &str,
) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push("generated_at", generated_at)
        .push("mode", if r.breakdown.is_some() { "runs" } else { "summary" });
    for ((name, unit), m) in RESULT_FIELDS.iter().zip(result_values(r)) {
        kv.push_f64(&format!("{name}_{unit}"), m.value)
            .push_f64(&format!("{name}_unc_{unit}"), m.unc);
    }
    kv.push("gamma_ps_2pi_mhz", paren(r.gamma_ps.value / TAU / 1e6, r.gamma_ps.unc / TAU / 1e6))
        .push("gamma_pd_2pi_mhz", paren(r.gamma_pd.value / TAU / 1e6, r.gamma_pd.unc / TAU / 1e6))
        .push("branching", paren(r.branching.value, r.branching.unc))
        .push("lifetime_ns", paren(r.lifetime.value * 1e9, r.lifetime.unc * 1e9))
        .push("d_reduced_ea0", paren(r.d_reduced.value, r.d_reduced.unc))
        .push("d_p32_ea0", paren(r.d_p32.value, r.d_p32.unc))
        .push_f64("ledger_total_shift", ledger.total_shift())
        .push_f64("ledger_total_unc", ledger.total_uncertainty());
    if let Some(b) = &r.breakdown {
        kv.push_f64("gamma_ps_raw_rad_s", b.gamma_ps_raw.value)
            .push_f64("gamma_ps_raw_unc_rad_s", b.gamma_ps_raw.unc)
            .push_f64("stat_rel", b.stat_rel)
            .push_f64("resonance_rel", b.resonance_rel)
            .push_f64("applied_shift", b.ledger_shift)
            .push_f64("applied_ledger_rel", b.ledger_rel)
            .push("runs", b.runs.len());
        for g in &b.runs {
            kv.push(
                &format!("run{:03}_gamma_ps_rad_s", g.run),
                format!("{:e} +/- {:e} ({}, detuning {:e} rad/s)", g.gamma_ps.value, g.gamma_ps.unc, g.label, g.detuning),
            );
        }
    }
    kv
}

/// Headline numbers back from a results record; the breakdown is not restored.
pub fn results_from_kv(kv: &KeyValues) -> Result<FinalResults> {
    let m = |name: &str, unit: &str| -> Result<Measured<f64>> {
        Ok(Measured::new(
            kv.get_f64(&format!("{name}_{unit}"))?,
            kv.get_f64(&format!("{name}_unc_{unit}"))?,
        ))
    };
    let r = FinalResults {
        gamma_ps: m("gamma_ps", "rad_s")?,
        gamma_pd: m("gamma_pd", "rad_s")?,
        leak_b: m("leak_b", "1")?,
        branching: m("branching_fraction", "1")?,
        lifetime: m("lifetime", "s")?,
        d_reduced: m("d_reduced", "e_a0")?,
        d_p32: m("d_p32", "e_a0")?,
        breakdown: None,
    };
    r.check_identities()?;
    Ok(r)
}

/// Human-readable summary.
pub fn summary_text(
    r: &FinalResults,
    resonance: Option<&ResonanceFit>,
    ledger: &CorrectionLedger<f64>,
    generated_at: &str,
) -> String {
    let mut kv = KeyValues::new();
    kv.push("generated_at", generated_at)
        .push("decay_rate_P1/2->S1/2", format!("2pi x {} MHz", paren(r.gamma_ps.value / TAU / 1e6, r.gamma_ps.unc / TAU / 1e6)))
        .push("decay_rate_P1/2->D3/2", format!("2pi x {} MHz", paren(r.gamma_pd.value / TAU / 1e6, r.gamma_pd.unc / TAU / 1e6)))
        .push("leak_factor_b", paren(r.leak_b.value, r.leak_b.unc))
        .push("branching_fraction", paren(r.branching.value, r.branching.unc))
        .push("lifetime_P1/2", format!("{} ns", paren(r.lifetime.value * 1e9, r.lifetime.unc * 1e9)))
        .push("matrix_element_S1/2-P1/2", format!("{} e a0", paren(r.d_reduced.value, r.d_reduced.unc)))
        .push("matrix_element_S1/2-P3/2", format!("{} e a0", paren(r.d_p32.value, r.d_p32.unc)))
        .push("ledger_total", format!("shift {:+.2}e-3, uncertainty {:.2}e-3", ledger.total_shift() * 1e3, ledger.total_uncertainty() * 1e3));
    if let Some(f) = resonance {
        kv.push(
            "resonance",
            format!(
                "{} THz",
                paren(f.zero_crossing / TAU / 1e12, f.zero_crossing_uncertainty / TAU / 1e12)
            ),
        )
        .push("resonance_unc", format!("2pi x {:.1} MHz", f.zero_crossing_uncertainty / TAU / 1e6))
        .push("regression_chi2_per_dof", format!("{:.3}", f.chi2 / (f.dof.max(1) as f64)));
    }
    if let Some(b) = &r.breakdown {
        kv.push("runs", b.runs.len())
            .push("raw_decay_rate", format!("2pi x {} MHz", paren(b.gamma_ps_raw.value / TAU / 1e6, b.gamma_ps_raw.unc / TAU / 1e6)))
            .push("relative_uncertainty_statistical", format!("{:.3e}", b.stat_rel))
            .push("relative_uncertainty_resonance", format!("{:.3e}", b.resonance_rel));
    }
    kv.render(SUMMARY_HEADER)
}

/// Flip-scan model used for plot curves.
#[derive(Debug, Clone, Copy)]
pub struct FlipCurve {
    pub params: DynamicsParams<f64>,
    pub spam: SpamModel,
}

impl FlipCurve {
    pub fn dark_fraction(&self, init: Spin, t: f64) -> Result<f64> {
        self.spam.dark_probability(&evolve_analytic(&self.params, init, t)?)
    }
}

/// Rows `run,init,duration_s,shots,dark_count,dark_fraction,model` for flip scans.
pub fn flip_plot_csv(rows: &[(usize, &ShotDataset, Option<FlipCurve>)]) -> Result<String> {
    let mut out = String::from("run,init,duration_s,shots,dark_count,dark_fraction,model\n");
    for (run, ds, curve) in rows {
        let ScanKind::Flip(init) = ds.kind() else {
            continue;
        };
        for r in ds.rows() {
            let model = match curve {
                Some(c) => format!("{:.6e}", c.dark_fraction(init, r.duration)?),
                None => String::new(),
            };
            let _ = writeln!(
                out,
                "{run},{},{:.8e},{},{},{:.6e},{model}",
                init.as_str(),
                r.duration,
                r.shots,
                r.dark_count,
                r.dark_fraction()
            );
        }
    }
    Ok(out)
}

/// Rows `run,block,pulse_s,shots,dark_count,dark_fraction,model` for echo scans.
pub fn echo_plot_csv(rows: &[(usize, usize, &ShotDataset, Option<(f64, EchoParams<f64>)>)]) -> String {
    let mut out = String::from("run,block,pulse_s,shots,dark_count,dark_fraction,model\n");
    for (run, block, ds, curve) in rows {
        for r in ds.rows() {
            let model = curve
                .map(|(w, p)| format!("{:.6e}", crate::dynamics::echo_model(w, r.duration, &p)))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{run},{block},{:.8e},{},{},{:.6e},{model}",
                r.duration,
                r.shots,
                r.dark_count,
                r.dark_fraction()
            );
        }
    }
    out
}

/// Regression points `run,label,optical_frequency_hz,ordinate_s,ordinate_unc_s`
/// and `samples` fit-line points spanning the data.
pub fn resonance_plot_csv(
    points: &[(usize, String, ResonancePoint)],
    fit: &ResonanceFit,
    samples: usize,
) -> Result<(String, String)> {
    let mut pts = String::from("run,label,optical_frequency_hz,ordinate_s,ordinate_unc_s\n");
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (run, label, p) in points {
        let (y, sy) = p.ordinate()?;
        lo = lo.min(p.optical_frequency);
        hi = hi.max(p.optical_frequency);
        let _ = writeln!(pts, "{run},{label},{:.6},{y:.8e},{sy:.8e}", p.optical_frequency / TAU);
    }
    let mut line = String::from("optical_frequency_hz,ordinate_s\n");
    if lo.is_finite() && samples >= 2 {
        let pad = 0.05 * (hi - lo);
        let (a, b) = (lo - pad, hi + pad);
        for i in 0..samples {
            let x = a + (b - a) * i as f64 / (samples - 1) as f64;
            let _ = writeln!(line, "{:.6},{:.8e}", x / TAU, fit.predict(x));
        }
    }
    Ok((pts, line))
}
