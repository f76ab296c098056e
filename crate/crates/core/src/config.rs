//! TOML configuration for the simulate/fit/derive/report workflow.
//!
//! Units are part of the key names: `_mhz` and `_ghz` are ordinary
//! frequencies (the code multiplies by 2π), `_ns` are nanoseconds, `_per_s`
//! are rates in 1/s. Every section is optional at parse time; each stage
//! asks for the sections it needs and reports the missing or invalid key.
//!
//! ```toml
//! seed = 1
//!
//! [truth]
//! gamma_ps_mhz = 21.57
//! branching_fraction = 0.93572
//!
//! [laser]
//! rabi_mhz = 440.0
//! eps_plus_sq = 0.995
//! eps_minus_sq = 0.005
//! resonance_thz = 755.222766
//!
//! [[detunings]]
//! label = "m12.03"
//! detuning_ghz = -12.03
//!
//! [flip_scan]
//! max_duration_ns = 1.0e6
//! points = 30
//! shots = 500
//!
//! [echo_scan]
//! points = 120
//! spacing_ns = 120.0
//! shots = 100
//!
//! [campaign]
//! runs = 8
//! ```
//!
//! See `configs/` in the repository for complete files.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::constants::PhysicalConstants;
use crate::derivation::{CorrectionLedger, DeriveOptions, Measured};
use crate::dynamics::EchoParams;
use crate::error::{Error, Result};
use crate::inference::{EchoFitOptions, EchoInit, FlipPrior, McmcConfig};
use crate::physics::{DecayConstants, LaserField};
use crate::simulator::{
    CampaignSpec, DetuningSetting, DriftModel, RunSchedule, SinkReadout, SpamModel, MAX_PI_FRACTION,
};
use crate::TAU;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub constants: ConstantsSection,
    pub truth: Option<TruthSection>,
    pub laser: Option<LaserSection>,
    #[serde(default)]
    pub detunings: Vec<DetuningEntry>,
    #[serde(default)]
    pub spam: SpamSection,
    pub flip_scan: Option<FlipScanSection>,
    pub echo_scan: Option<EchoScanSection>,
    pub campaign: Option<CampaignSection>,
    #[serde(default)]
    pub wavemeter: WavemeterSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub derive: DeriveSection,
    pub paper_inputs: Option<PaperInputs>,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    /// Constants table file; the shipped table when absent.
    pub file: Option<PathBuf>,
    pub lambda_ps_nm: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    /// γ_PS / 2π.
    pub gamma_ps_mhz: f64,
    pub branching_fraction: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LaserSection {
    /// Ω / 2π.
    pub rabi_mhz: f64,
    pub eps_plus_sq: f64,
    pub eps_minus_sq: f64,
    #[serde(default)]
    pub eps_pi_sq: f64,
    /// Optical resonance frequency, ordinary THz.
    pub resonance_thz: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DetuningEntry {
    pub label: String,
    /// Δ / 2π.
    pub detuning_ghz: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SpamSection {
    pub dark_given_up: f64,
    pub dark_given_down: f64,
    pub sink: SinkReadout,
}

impl Default for SpamSection {
    fn default() -> Self {
        Self {
            dark_given_up: 0.97,
            dark_given_down: 0.03,
            sink: SinkReadout::Bright,
        }
    }
}

/// Either an explicit list or `points` evenly spaced durations from zero to
/// `max_duration_ns`.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FlipScanSection {
    pub durations_ns: Option<Vec<f64>>,
    pub max_duration_ns: Option<f64>,
    pub points: Option<usize>,
    pub shots: u32,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EchoScanSection {
    pub points: usize,
    pub spacing_ns: f64,
    #[serde(default)]
    pub start_ns: f64,
    pub shots: u32,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default)]
    pub decay_per_s: f64,
}

fn default_contrast() -> f64 {
    0.45
}

fn default_offset() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub runs: usize,
    /// Fractional change of Ω² per measurement block.
    #[serde(default)]
    pub drift_omega_sq_per_block: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WavemeterSection {
    /// Read noise, 1σ.
    #[serde(default)]
    pub sigma_mhz: f64,
}

/// Which circular component dominates the off-resonant beam. Fixes the sign
/// of the light shift, which the echo oscillation alone does not reveal.
#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Circular {
    #[default]
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub rate_min_per_s: f64,
    pub rate_max_per_s: f64,
    pub leak_b_max: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = FlipPrior::default();
        Self {
            rate_min_per_s: p.rate_min,
            rate_max_per_s: p.rate_max,
            leak_b_max: p.leak_b_max,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EchoFitSection {
    pub oversample: usize,
    pub min_periods: f64,
    pub ambiguity_ratio: f64,
}

impl Default for EchoFitSection {
    fn default() -> Self {
        let o = EchoFitOptions::default();
        Self {
            oversample: 10,
            min_periods: o.min_periods,
            ambiguity_ratio: o.ambiguity_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub mcmc: McmcConfig,
    pub prior: PriorSection,
    pub echo: EchoFitSection,
    pub dominant_circular: Circular,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DeriveSection {
    /// Ledger CSV; the shipped ledger when absent.
    pub ledger: Option<PathBuf>,
    /// Use an empty ledger instead (no corrections).
    pub no_ledger: bool,
    pub resonance_uncertainty: bool,
}

impl Default for DeriveSection {
    fn default() -> Self {
        Self {
            ledger: None,
            no_ledger: false,
            resonance_uncertainty: true,
        }
    }
}

/// Already corrected summary values; `derive` then skips the per-run stage.
#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PaperInputs {
    /// γ_PS / 2π.
    pub gamma_ps_mhz: f64,
    pub gamma_ps_unc_mhz: f64,
    pub branching_fraction: f64,
    pub branching_unc: f64,
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be a positive number, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be >= 0, got {v}")))
    }
}

fn required<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::config(name, "section is required for this stage"))
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    /// Parses and validates every section that is present. Relative paths
    /// inside the file resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            Error::config(field, msg)
        })?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.constants()?;
        if let Some(t) = &self.truth {
            self.decay_constants_of(t)?;
        }
        if self.laser.is_some() || !self.detunings.is_empty() {
            self.detuning_settings()?;
        }
        self.spam_model()?;
        if self.flip_scan.is_some() {
            self.flip_durations()?;
        }
        if self.echo_scan.is_some() {
            self.echo_durations()?;
            self.echo_params()?;
        }
        if let Some(c) = &self.campaign {
            if c.runs == 0 {
                return Err(Error::config("campaign.runs", "must be >= 1"));
            }
        }
        non_negative("wavemeter.sigma_mhz", self.wavemeter.sigma_mhz)?;
        self.fit.mcmc.validate()?;
        self.flip_prior().validate()?;
        self.echo_options()?;
        if let Some(p) = &self.paper_inputs {
            self.summary_inputs_of(p)?;
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn constants(&self) -> Result<PhysicalConstants<f64>> {
        let base = match &self.constants.file {
            Some(f) => PhysicalConstants::load(self.resolve(f))?,
            None => PhysicalConstants::reference(),
        };
        match self.constants.lambda_ps_nm {
            Some(nm) => base.with_lambda_ps(positive("constants.lambda_ps_nm", nm)? * 1e-9),
            None => Ok(base),
        }
    }

    fn decay_constants_of(&self, t: &TruthSection) -> Result<DecayConstants<f64>> {
        let g = positive("truth.gamma_ps_mhz", t.gamma_ps_mhz)?;
        if !(t.branching_fraction > 0.0 && t.branching_fraction <= 1.0) {
            return Err(Error::config("truth.branching_fraction", "must lie in (0, 1]"));
        }
        DecayConstants::from_branching(TAU * g * 1e6, t.branching_fraction)
    }

    pub fn truth(&self) -> Result<DecayConstants<f64>> {
        self.decay_constants_of(required(&self.truth, "truth")?)
    }

    pub fn resonance_hz(&self) -> Result<f64> {
        let l = required(&self.laser, "laser")?;
        Ok(positive("laser.resonance_thz", l.resonance_thz)? * 1e12)
    }

    pub fn detuning_settings(&self) -> Result<Vec<DetuningSetting>> {
        let l = required(&self.laser, "laser")?;
        positive("laser.rabi_mhz", l.rabi_mhz)?;
        positive("laser.resonance_thz", l.resonance_thz)?;
        for (k, v) in [
            ("laser.eps_plus_sq", l.eps_plus_sq),
            ("laser.eps_minus_sq", l.eps_minus_sq),
            ("laser.eps_pi_sq", l.eps_pi_sq),
        ] {
            non_negative(k, v)?;
        }
        if self.detunings.is_empty() {
            return Err(Error::config("detunings", "at least one detuning is required"));
        }
        let mut out: Vec<DetuningSetting> = Vec::with_capacity(self.detunings.len());
        for (i, d) in self.detunings.iter().enumerate() {
            let field = format!("detunings[{i}]");
            if d.label.is_empty() || d.label.contains([',', '=', '\n', '/', '\\']) {
                return Err(Error::config(
                    format!("{field}.label"),
                    "must be non-empty without `,` `=` `/` or line breaks",
                ));
            }
            if out.iter().any(|s| s.label == d.label) {
                return Err(Error::config(format!("{field}.label"), format!("duplicate `{}`", d.label)));
            }
            if !(d.detuning_ghz.is_finite() && d.detuning_ghz != 0.0) {
                return Err(Error::config(format!("{field}.detuning_ghz"), "must be finite and nonzero"));
            }
            let laser = LaserField::from_fractions(
                TAU * d.detuning_ghz * 1e9,
                TAU * l.rabi_mhz * 1e6,
                l.eps_plus_sq,
                l.eps_minus_sq,
                l.eps_pi_sq,
            )
            .map_err(|e| Error::config("laser", e.to_string()))?;
            laser
                .ensure_circular(MAX_PI_FRACTION)
                .map_err(|e| Error::config("laser.eps_pi_sq", e.to_string()))?;
            out.push(DetuningSetting {
                label: d.label.clone(),
                field: laser,
            });
        }
        Ok(out)
    }

    /// Configured detuning (rad/s) for a label.
    pub fn detuning_of(&self, label: &str) -> Result<f64> {
        self.detunings
            .iter()
            .find(|d| d.label == label)
            .map(|d| TAU * d.detuning_ghz * 1e9)
            .ok_or_else(|| Error::config("detunings", format!("no detuning labelled `{label}`")))
    }

    pub fn spam_model(&self) -> Result<SpamModel> {
        let s = &self.spam;
        SpamModel::with_sink(s.dark_given_up, s.dark_given_down, s.sink)
            .map_err(|e| Error::config("spam", e.to_string()))
    }

    /// Flip-scan durations in seconds.
    pub fn flip_durations(&self) -> Result<Vec<f64>> {
        let f = required(&self.flip_scan, "flip_scan")?;
        if f.shots == 0 {
            return Err(Error::config("flip_scan.shots", "must be >= 1"));
        }
        let ns = match (&f.durations_ns, f.max_duration_ns, f.points) {
            (Some(list), None, None) => {
                if list.is_empty() {
                    return Err(Error::config("flip_scan.durations_ns", "must not be empty"));
                }
                for &d in list {
                    non_negative("flip_scan.durations_ns", d)?;
                }
                list.clone()
            }
            (None, Some(max), Some(n)) => {
                positive("flip_scan.max_duration_ns", max)?;
                if n < 2 {
                    return Err(Error::config("flip_scan.points", "must be >= 2"));
                }
                (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
            }
            _ => {
                return Err(Error::config(
                    "flip_scan.durations_ns",
                    "give either durations_ns or both max_duration_ns and points",
                ))
            }
        };
        Ok(ns.into_iter().map(|d| d * 1e-9).collect())
    }

    /// Echo pulse times in seconds.
    pub fn echo_durations(&self) -> Result<Vec<f64>> {
        let e = required(&self.echo_scan, "echo_scan")?;
        if e.points == 0 {
            return Err(Error::config("echo_scan.points", "must not be empty"));
        }
        if e.shots == 0 {
            return Err(Error::config("echo_scan.shots", "must be >= 1"));
        }
        positive("echo_scan.spacing_ns", e.spacing_ns)?;
        non_negative("echo_scan.start_ns", e.start_ns)?;
        Ok((0..e.points)
            .map(|i| (e.start_ns + e.spacing_ns * i as f64) * 1e-9)
            .collect())
    }

    pub fn echo_params(&self) -> Result<EchoParams<f64>> {
        let e = required(&self.echo_scan, "echo_scan")?;
        let p = EchoParams {
            contrast: e.contrast,
            offset: e.offset,
            phase: e.phase_rad,
            decay_rate: e.decay_per_s,
        };
        p.validate().map_err(|err| Error::config("echo_scan", err.to_string()))?;
        Ok(p)
    }

    pub fn schedule(&self) -> Result<RunSchedule> {
        let c = required(&self.campaign, "campaign")?;
        let labels: Vec<String> = self.detunings.iter().map(|d| d.label.clone()).collect();
        let drift = DriftModel {
            omega_sq_per_block: c.drift_omega_sq_per_block,
        };
        let total_blocks = c.runs * crate::simulator::BLOCKS_PER_RUN;
        drift
            .factor(total_blocks.saturating_sub(1))
            .map_err(|e| Error::config("campaign.drift_omega_sq_per_block", e.to_string()))?;
        RunSchedule::round_robin(&labels, c.runs, drift)
    }

    pub fn campaign_spec(&self) -> Result<CampaignSpec> {
        let e = required(&self.echo_scan, "echo_scan")?;
        Ok(CampaignSpec {
            settings: self.detuning_settings()?,
            truth: self.truth()?,
            spam: self.spam_model()?,
            flip_durations: self.flip_durations()?,
            flip_shots: required(&self.flip_scan, "flip_scan")?.shots,
            echo_durations: self.echo_durations()?,
            echo_shots: e.shots,
            echo: self.echo_params()?,
            resonance_hz: self.resonance_hz()?,
            wavemeter_sigma_hz: self.wavemeter.sigma_mhz * 1e6,
        })
    }

    pub fn mcmc(&self) -> McmcConfig {
        self.fit.mcmc
    }

    pub fn flip_prior(&self) -> FlipPrior {
        FlipPrior {
            rate_min: self.fit.prior.rate_min_per_s,
            rate_max: self.fit.prior.rate_max_per_s,
            leak_b_max: self.fit.prior.leak_b_max,
            sink: self.spam.sink,
        }
    }

    pub fn echo_options(&self) -> Result<EchoFitOptions> {
        let e = &self.fit.echo;
        if e.oversample == 0 {
            return Err(Error::config("fit.echo.oversample", "must be >= 1"));
        }
        positive("fit.echo.min_periods", e.min_periods)?;
        if !(e.ambiguity_ratio > 0.0 && e.ambiguity_ratio <= 1.0) {
            return Err(Error::config("fit.echo.ambiguity_ratio", "must lie in (0, 1]"));
        }
        Ok(EchoFitOptions {
            init: EchoInit::Periodogram {
                oversample: e.oversample,
            },
            min_periods: e.min_periods,
            ambiguity_ratio: e.ambiguity_ratio,
        })
    }

    /// Sign of the light shift at detuning `detuning` (rad/s):
    /// `Δ_S ∝ (ε₋² − ε₊²)/Δ`.
    pub fn stark_sign(&self, detuning: f64) -> f64 {
        let imbalance = match self.fit.dominant_circular {
            Circular::Plus => -1.0,
            Circular::Minus => 1.0,
        };
        imbalance * detuning.signum()
    }

    pub fn ledger(&self) -> Result<CorrectionLedger<f64>> {
        if self.derive.no_ledger {
            return Ok(CorrectionLedger::empty());
        }
        match &self.derive.ledger {
            Some(p) => CorrectionLedger::load(self.resolve(p)),
            None => Ok(CorrectionLedger::shipped()),
        }
    }

    pub fn derive_options(&self) -> DeriveOptions {
        DeriveOptions {
            resonance_uncertainty: self.derive.resonance_uncertainty,
        }
    }

    fn summary_inputs_of(&self, p: &PaperInputs) -> Result<(Measured<f64>, Measured<f64>)> {
        let g = positive("paper_inputs.gamma_ps_mhz", p.gamma_ps_mhz)?;
        let gu = non_negative("paper_inputs.gamma_ps_unc_mhz", p.gamma_ps_unc_mhz)?;
        if !(p.branching_fraction > 0.0 && p.branching_fraction <= 1.0) {
            return Err(Error::config("paper_inputs.branching_fraction", "must lie in (0, 1]"));
        }
        let bu = non_negative("paper_inputs.branching_unc", p.branching_unc)?;
        Ok((
            Measured::new(TAU * g * 1e6, TAU * gu * 1e6),
            Measured::new(p.branching_fraction, bu),
        ))
    }

    /// `(γ_PS, branching)` when the config carries summary inputs.
    pub fn summary_inputs(&self) -> Result<Option<(Measured<f64>, Measured<f64>)>> {
        self.paper_inputs
            .as_ref()
            .map(|p| self.summary_inputs_of(p))
            .transpose()
    }
}
