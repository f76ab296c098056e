//! Forward generation of synthetic shot data.

mod campaign;
mod dataset;

pub use campaign::{
    simulate_campaign, CampaignSpec, DetuningSetting, DriftModel, RunSchedule, BLOCKS_PER_RUN,
};
pub use dataset::{DatasetMeta, ScanKind, ShotDataset, ShotRow, DATASET_COLUMNS, DATASET_HEADER};

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::dynamics::{evolve_analytic, spin_echo_signal, PopulationState, Spin};
use crate::DynamicsParams;
use crate::error::{Error, Result};
use crate::physics::{spin_flip_rates, DecayConstants, LaserField};
use crate::rng::{self, Domain};
use crate::EchoParams;

/// Largest π-polarized intensity fraction for which the sink model is used.
pub const MAX_PI_FRACTION: f64 = 0.01;

/// How population in the D₃/₂ sink shows up at readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkReadout {
    /// Sink population fluoresces like |↓⟩.
    #[default]
    Bright,
    /// Sink population reads out dark like |↑⟩.
    Dark,
}

/// Affine map from populations to dark-event probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpamModel {
    dark_given_up: f64,
    dark_given_down: f64,
    dark_given_sink: f64,
}

impl SpamModel {
    pub fn new(dark_given_up: f64, dark_given_down: f64, dark_given_sink: f64) -> Result<Self> {
        for (name, p) in [
            ("dark_given_up", dark_given_up),
            ("dark_given_down", dark_given_down),
            ("dark_given_sink", dark_given_sink),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if dark_given_up <= dark_given_down {
            return Err(Error::Domain(
                "dark_given_up must exceed dark_given_down for the readout to discriminate".into(),
            ));
        }
        Ok(Self {
            dark_given_up,
            dark_given_down,
            dark_given_sink,
        })
    }

    /// Sink probability tied to one of the spin levels.
    pub fn with_sink(dark_given_up: f64, dark_given_down: f64, sink: SinkReadout) -> Result<Self> {
        let s = match sink {
            SinkReadout::Bright => dark_given_down,
            SinkReadout::Dark => dark_given_up,
        };
        Self::new(dark_given_up, dark_given_down, s)
    }

    /// Perfect shelving readout with a bright sink.
    pub fn ideal() -> Self {
        Self {
            dark_given_up: 1.0,
            dark_given_down: 0.0,
            dark_given_sink: 0.0,
        }
    }

    pub fn dark_given_up(&self) -> f64 {
        self.dark_given_up
    }

    pub fn dark_given_down(&self) -> f64 {
        self.dark_given_down
    }

    pub fn dark_given_sink(&self) -> f64 {
        self.dark_given_sink
    }

    pub fn dark_probability(&self, p: &PopulationState<f64>) -> Result<f64> {
        let q = self.dark_given_up * p.p_up
            + self.dark_given_down * p.p_down
            + self.dark_given_sink * p.p_sink;
        clamp_probability(q)
    }
}

pub(crate) fn clamp_probability(q: f64) -> Result<f64> {
    const SLACK: f64 = 1e-12;
    if !(q >= -SLACK && q <= 1.0 + SLACK) {
        return Err(Error::Model(format!("dark probability {q} outside [0, 1]")));
    }
    Ok(q.clamp(0.0, 1.0))
}

/// Exposure times and shot count for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    durations: Vec<f64>,
    shots_per_duration: u32,
    kind: ScanKind,
    detuning_label: String,
}

impl ScanPlan {
    pub fn new(
        durations: Vec<f64>,
        shots_per_duration: u32,
        kind: ScanKind,
        detuning_label: impl Into<String>,
    ) -> Result<Self> {
        if durations.is_empty() {
            return Err(Error::Input("scan plan has no durations".into()));
        }
        if durations.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Input("durations must be finite and >= 0".into()));
        }
        if durations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("durations must be strictly increasing".into()));
        }
        if shots_per_duration == 0 {
            return Err(Error::Input("shots_per_duration must be >= 1".into()));
        }
        Ok(Self {
            durations,
            shots_per_duration,
            kind,
            detuning_label: detuning_label.into(),
        })
    }

    /// `count` points `start, start + spacing, …`.
    pub fn arithmetic(
        start: f64,
        spacing: f64,
        count: usize,
        shots_per_duration: u32,
        kind: ScanKind,
        detuning_label: impl Into<String>,
    ) -> Result<Self> {
        let durations = (0..count).map(|i| start + spacing * i as f64).collect();
        Self::new(durations, shots_per_duration, kind, detuning_label)
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn shots_per_duration(&self) -> u32 {
        self.shots_per_duration
    }

    pub fn kind(&self) -> ScanKind {
        self.kind
    }

    pub fn detuning_label(&self) -> &str {
        &self.detuning_label
    }

    fn is_arithmetic(&self) -> bool {
        if self.durations.len() < 3 {
            return true;
        }
        let step = self.durations[1] - self.durations[0];
        self.durations
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(f64::MIN_POSITIVE))
    }
}

/// Expected dark probability of a flip scan at each duration.
pub fn flip_scan_probabilities(
    params: &DynamicsParams,
    spam: &SpamModel,
    init: Spin,
    durations: &[f64],
) -> Result<Vec<f64>> {
    durations
        .iter()
        .map(|&t| spam.dark_probability(&evolve_analytic(params, init, t)?))
        .collect()
}

/// Flip-scan dynamics parameters for a field and decay constants.
pub fn flip_params(field: &LaserField<f64>, truth: &DecayConstants<f64>) -> Result<DynamicsParams> {
    field.ensure_circular(MAX_PI_FRACTION)?;
    let rates = spin_flip_rates(field, truth.gamma_ps())?;
    DynamicsParams::new(rates, truth.leak_b())
}

/// Spin-flip scan with binomial shot noise. Uses stream block 0.
pub fn simulate_flip_scan(
    field: &LaserField<f64>,
    truth: &DecayConstants<f64>,
    spam: &SpamModel,
    plan: &ScanPlan,
    seed: u64,
) -> Result<ShotDataset> {
    simulate_flip_scan_in_block(field, truth, spam, plan, seed, 0)
}

/// Spin-flip scan drawing from stream block `block`.
pub fn simulate_flip_scan_in_block(
    field: &LaserField<f64>,
    truth: &DecayConstants<f64>,
    spam: &SpamModel,
    plan: &ScanPlan,
    seed: u64,
    block: u32,
) -> Result<ShotDataset> {
    let ScanKind::Flip(init) = plan.kind else {
        return Err(Error::Input("flip scan requires an up or down initialization".into()));
    };
    let params = flip_params(field, truth)?;
    let probs = flip_scan_probabilities(&params, spam, init, &plan.durations)?;
    draw_rows(plan, &probs, seed, Domain::FlipScan, block)
}

/// Spin-echo scan with binomial shot noise. Uses stream block 0.
pub fn simulate_echo_scan(
    stark: f64,
    echo: &EchoParams,
    plan: &ScanPlan,
    seed: u64,
) -> Result<ShotDataset> {
    simulate_echo_scan_in_block(stark, echo, plan, seed, 0)
}

pub fn simulate_echo_scan_in_block(
    stark: f64,
    echo: &EchoParams,
    plan: &ScanPlan,
    seed: u64,
    block: u32,
) -> Result<ShotDataset> {
    if plan.kind != ScanKind::Echo {
        return Err(Error::Input("echo scan requires an echo plan".into()));
    }
    if !plan.is_arithmetic() {
        return Err(Error::Input("echo scan durations must form an arithmetic grid".into()));
    }
    let probs = plan
        .durations
        .iter()
        .map(|&t| {
            let s = spin_echo_signal(stark, t, echo)?;
            if !s.valid {
                return Err(Error::Model(format!(
                    "echo signal leaves [0, 1] at t = {t} s (offset {} contrast {})",
                    echo.offset, echo.contrast
                )));
            }
            Ok(s.value)
        })
        .collect::<Result<Vec<_>>>()?;
    draw_rows(plan, &probs, seed, Domain::EchoScan, block)
}

fn draw_rows(
    plan: &ScanPlan,
    probs: &[f64],
    seed: u64,
    domain: Domain,
    block: u32,
) -> Result<ShotDataset> {
    let shots = plan.shots_per_duration;
    let rows = plan
        .durations
        .par_iter()
        .zip(probs.par_iter())
        .enumerate()
        .map(|(i, (&duration, &q))| {
            let mut rng = rng::stream(seed, domain, block, i as u32);
            let dist = Binomial::new(shots as u64, q)
                .map_err(|e| Error::Model(format!("binomial({shots}, {q}): {e}")))?;
            Ok(ShotRow {
                duration,
                shots,
                dark_count: dist.sample(&mut rng) as u32,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = DatasetMeta::new(seed, plan.detuning_label.clone(), plan.kind);
    ShotDataset::new(rows, meta)
}
