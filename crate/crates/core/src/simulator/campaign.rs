//! Interleaved measurement campaigns.
//!
//! Each run is four blocks: echo scan, flip scan from |↑⟩, flip scan from
//! |↓⟩, echo scan. Block `k` of run `r` has global index `4r + k`, which is
//! also its random stream block and the time coordinate of the drift model.

use rand_distr::{Distribution, Normal};

use super::{
    simulate_echo_scan_in_block, simulate_flip_scan_in_block, ScanKind, ScanPlan, ShotDataset,
    SpamModel,
};
use crate::dynamics::Spin;
use crate::error::{Error, Result};
use crate::physics::{stark_shift, DecayConstants, LaserField};
use crate::rng::{self, Domain};
use crate::{EchoParams, TAU};

pub const BLOCKS_PER_RUN: usize = 4;

const BLOCK_KINDS: [ScanKind; BLOCKS_PER_RUN] = [
    ScanKind::Echo,
    ScanKind::Flip(Spin::Up),
    ScanKind::Flip(Spin::Down),
    ScanKind::Echo,
];

/// One configured detuning of the off-resonant laser.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningSetting {
    pub label: String,
    pub field: LaserField<f64>,
}

/// Linear intensity drift: block `k` sees `Ω² · (1 + omega_sq_per_block · k)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftModel {
    pub omega_sq_per_block: f64,
}

impl DriftModel {
    pub fn factor(&self, global_block: usize) -> Result<f64> {
        let f = 1.0 + self.omega_sq_per_block * global_block as f64;
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::config(
                "drift",
                format!("intensity factor {f} at block {global_block} is not positive"),
            ));
        }
        Ok(f)
    }
}

/// Ordered runs, each naming the detuning it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSchedule {
    runs: Vec<String>,
    drift: DriftModel,
}

impl RunSchedule {
    pub fn new(runs: Vec<String>, drift: DriftModel) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::config("campaign.runs", "at least one run is required"));
        }
        Ok(Self { runs, drift })
    }

    /// `count` runs cycling through `labels` in order.
    pub fn round_robin(labels: &[String], count: usize, drift: DriftModel) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::config("detunings", "no detunings configured"));
        }
        Self::new(
            (0..count).map(|i| labels[i % labels.len()].clone()).collect(),
            drift,
        )
    }

    pub fn runs(&self) -> &[String] {
        &self.runs
    }

    pub fn drift(&self) -> DriftModel {
        self.drift
    }

    pub fn block_kinds() -> [ScanKind; BLOCKS_PER_RUN] {
        BLOCK_KINDS
    }
}

/// Everything a campaign needs besides the schedule and seed.
#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub settings: Vec<DetuningSetting>,
    pub truth: DecayConstants<f64>,
    pub spam: SpamModel,
    pub flip_durations: Vec<f64>,
    pub flip_shots: u32,
    pub echo_durations: Vec<f64>,
    pub echo_shots: u32,
    pub echo: EchoParams,
    /// Optical resonance frequency (Hz) the wavemeter readings are built from.
    pub resonance_hz: f64,
    /// Gaussian wavemeter read noise (Hz, 1σ).
    pub wavemeter_sigma_hz: f64,
}

impl CampaignSpec {
    fn setting(&self, label: &str) -> Result<&DetuningSetting> {
        self.settings
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| Error::config("campaign.runs", format!("unknown detuning label `{label}`")))
    }
}

/// Simulates every block of every run. Datasets are returned in acquisition
/// order with `run`, `block` and `optical_frequency_hz` metadata.
pub fn simulate_campaign(
    schedule: &RunSchedule,
    spec: &CampaignSpec,
    seed: u64,
) -> Result<Vec<ShotDataset>> {
    for label in &schedule.runs {
        spec.setting(label)?;
    }
    if !(spec.wavemeter_sigma_hz >= 0.0) {
        return Err(Error::config("wavemeter.sigma_mhz", "must be >= 0"));
    }
    let mut out = Vec::with_capacity(schedule.runs.len() * BLOCKS_PER_RUN);
    for (run, label) in schedule.runs.iter().enumerate() {
        let setting = spec.setting(label)?;
        let reading = wavemeter_reading(spec, setting, seed, run)?;
        for (pos, kind) in BLOCK_KINDS.iter().enumerate() {
            let global = run * BLOCKS_PER_RUN + pos;
            let block = u32::try_from(global)
                .map_err(|_| Error::config("campaign.runs", "too many blocks"))?;
            let field = setting
                .field
                .with_intensity_factor(schedule.drift.factor(global)?)?;
            let ds = match kind {
                ScanKind::Echo => {
                    let plan = ScanPlan::new(
                        spec.echo_durations.clone(),
                        spec.echo_shots,
                        *kind,
                        label.clone(),
                    )?;
                    simulate_echo_scan_in_block(stark_shift(&field)?, &spec.echo, &plan, seed, block)?
                }
                ScanKind::Flip(_) => {
                    let plan = ScanPlan::new(
                        spec.flip_durations.clone(),
                        spec.flip_shots,
                        *kind,
                        label.clone(),
                    )?;
                    simulate_flip_scan_in_block(&field, &spec.truth, &spec.spam, &plan, seed, block)?
                }
            };
            let meta = ds
                .meta()
                .clone()
                .with("run", run)
                .with("block", pos)
                .with("optical_frequency_hz", reading);
            out.push(ShotDataset::new(ds.rows().to_vec(), meta)?);
        }
    }
    Ok(out)
}

fn wavemeter_reading(
    spec: &CampaignSpec,
    setting: &DetuningSetting,
    seed: u64,
    run: usize,
) -> Result<f64> {
    let exact = spec.resonance_hz + setting.field.detuning() / TAU;
    if spec.wavemeter_sigma_hz == 0.0 {
        return Ok(exact);
    }
    let mut rng = rng::stream(seed, Domain::Wavemeter, run as u32, 0);
    let noise = Normal::new(0.0, spec.wavemeter_sigma_hz)
        .map_err(|e| Error::config("wavemeter.sigma_mhz", e.to_string()))?;
    Ok(exact + noise.sample(&mut rng))
}
