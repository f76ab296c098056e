//! The file-driven workflow: simulate → fit → derive → report.
//!
//! Directory layout under a work directory:
//!
//! * `datasets/run{RRR}_b{K}_{init}.csv`: one shot dataset per block.
//! * `estimates/run{RRR}_flip.txt`, `run{RRR}_echo_b{K}.txt`: raw fits.
//! * `estimates/run{RRR}.txt`: per-run `delta_r`, `stark`, `leak_b`.
//! * `estimates/resonance.txt`: zero-crossing regression.
//! * `results/results.txt`: final constants.
//! * `report/summary.txt` and plot CSVs.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::config::Config;
use crate::derivation::{derive_from_summary, derive_results, FinalResults, Measured, RunEstimate};
use crate::dynamics::{DynamicsParams, EchoParams};
use crate::error::{Error, Result};
use crate::inference::{
    fit_echo_scan, fit_flip_scan_in_block, fit_resonance, EstimateRecord, PosteriorEstimate,
    ResonanceFit, ResonancePoint,
};
use crate::physics::RatePair;
use crate::report::{self, FlipCurve, KeyValues};
use crate::simulator::{simulate_campaign, ScanKind, ShotDataset, SpamModel};
use crate::{Spin, TAU};

pub const DATASETS_DIR: &str = "datasets";
pub const ESTIMATES_DIR: &str = "estimates";
pub const RESULTS_DIR: &str = "results";
pub const REPORT_DIR: &str = "report";
pub const RESONANCE_FILE: &str = "resonance.txt";
pub const RESULTS_FILE: &str = "results.txt";
pub const SUMMARY_FILE: &str = "summary.txt";

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Sorted regular files in `dir` ending in `ext`.
fn list(dir: &Path, ext: &str) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn simulate(cfg: &Config, seed: u64) -> Result<Vec<ShotDataset>> {
    simulate_campaign(&cfg.schedule()?, &cfg.campaign_spec()?, seed)
}

fn meta_usize(ds: &ShotDataset, key: &str) -> Result<usize> {
    ds.meta().get_parsed(key)
}

pub fn dataset_file_name(ds: &ShotDataset) -> Result<String> {
    Ok(format!(
        "run{:03}_b{}_{}.csv",
        meta_usize(ds, "run")?,
        meta_usize(ds, "block")?,
        ds.kind().init_label()
    ))
}

pub fn write_datasets(dir: &Path, datasets: &[ShotDataset]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for ds in datasets {
        write(&dir.join(dataset_file_name(ds)?), &ds.to_file_string())?;
    }
    Ok(())
}

pub fn read_datasets(dir: &Path) -> Result<Vec<ShotDataset>> {
    let files = list(dir, "csv")?;
    if files.is_empty() {
        return Err(Error::Input(format!("no dataset files in {}", dir.display())));
    }
    files.iter().map(ShotDataset::load).collect()
}

/// The blocks of one measurement run.
#[derive(Debug, Clone)]
pub struct RunData<'a> {
    pub run: usize,
    pub label: String,
    pub optical_frequency_hz: f64,
    pub up: &'a ShotDataset,
    pub down: &'a ShotDataset,
    /// `(block, dataset)` for every echo scan of the run.
    pub echoes: Vec<(usize, &'a ShotDataset)>,
}

/// Groups datasets by their `run` metadata.
pub fn group_runs(datasets: &[ShotDataset]) -> Result<Vec<RunData<'_>>> {
    let mut by_run: BTreeMap<usize, Vec<&ShotDataset>> = BTreeMap::new();
    for ds in datasets {
        by_run.entry(meta_usize(ds, "run")?).or_default().push(ds);
    }
    by_run
        .into_iter()
        .map(|(run, blocks)| {
            let label = blocks[0].meta().detuning_label.clone();
            let freq: f64 = blocks[0].meta().get_parsed("optical_frequency_hz")?;
            let mut up = None;
            let mut down = None;
            let mut echoes = Vec::new();
            for ds in blocks {
                if ds.meta().detuning_label != label {
                    return Err(Error::Input(format!("run {run} mixes detuning labels")));
                }
                let f: f64 = ds.meta().get_parsed("optical_frequency_hz")?;
                if f != freq {
                    return Err(Error::Input(format!("run {run} mixes optical frequencies")));
                }
                let slot = match ds.kind() {
                    ScanKind::Flip(Spin::Up) => &mut up,
                    ScanKind::Flip(Spin::Down) => &mut down,
                    ScanKind::Echo => {
                        echoes.push((meta_usize(ds, "block")?, ds));
                        continue;
                    }
                };
                if slot.replace(ds).is_some() {
                    return Err(Error::Input(format!("run {run} has two flip scans of one kind")));
                }
            }
            let (Some(up), Some(down)) = (up, down) else {
                return Err(Error::Input(format!("run {run} lacks a flip scan")));
            };
            if echoes.is_empty() {
                return Err(Error::Input(format!("run {run} has no echo scan")));
            }
            echoes.sort_by_key(|(b, _)| *b);
            Ok(RunData {
                run,
                label,
                optical_frequency_hz: freq,
                up,
                down,
                echoes,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunFit {
    pub flip: PosteriorEstimate,
    pub echoes: Vec<(usize, PosteriorEstimate)>,
    pub estimate: RunEstimate,
    pub converged: bool,
}

fn measured(est: &PosteriorEstimate, name: &str) -> Result<Measured<f64>> {
    let p = est.require(name)?;
    Ok(Measured::new(p.point, p.std_unc()))
}

/// Flip fit (stream block = run index) and one echo fit per echo block.
/// The light shift is the mean of the echo fits, signed from the configured
/// polarization and detuning.
pub fn fit_run(cfg: &Config, data: &RunData<'_>, seed: u64) -> Result<RunFit> {
    let block = u32::try_from(data.run).map_err(|_| Error::Input("run index too large".into()))?;
    let flip = fit_flip_scan_in_block(data.up, data.down, &cfg.flip_prior(), &cfg.mcmc(), seed, block)?;
    let options = cfg.echo_options()?;
    let echoes = data
        .echoes
        .iter()
        .map(|(b, ds)| Ok((*b, fit_echo_scan(ds, &options)?)))
        .collect::<Result<Vec<_>>>()?;
    let sign = cfg.stark_sign(cfg.detuning_of(&data.label)?);
    let n = echoes.len() as f64;
    let mut sum = 0.0;
    let mut var = 0.0;
    for (_, e) in &echoes {
        let m = measured(e, "stark")?;
        sum += m.value;
        var += m.unc * m.unc;
    }
    let stark = Measured::new(sign * sum / n, var.sqrt() / n);
    let converged = flip.diagnostics.converged && echoes.iter().all(|(_, e)| e.diagnostics.converged);
    Ok(RunFit {
        estimate: RunEstimate {
            run: data.run,
            label: data.label.clone(),
            optical_frequency: TAU * data.optical_frequency_hz,
            delta_r: measured(&flip, "delta_r")?,
            stark,
            leak_b: measured(&flip, "leak_b")?,
        },
        flip,
        echoes,
        converged,
    })
}

pub fn resonance_points(estimates: &[RunEstimate]) -> Vec<ResonancePoint> {
    estimates
        .iter()
        .map(|e| ResonancePoint {
            optical_frequency: e.optical_frequency,
            stark: e.stark.value,
            stark_unc: e.stark.unc,
            delta_r: e.delta_r.value,
            delta_r_unc: e.delta_r.unc,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CampaignFit {
    pub runs: Vec<RunFit>,
    pub resonance: ResonanceFit,
}

impl CampaignFit {
    pub fn estimates(&self) -> Vec<RunEstimate> {
        self.runs.iter().map(|r| r.estimate.clone()).collect()
    }
}

/// Fits every run in parallel, then the resonance regression.
pub fn fit_campaign(cfg: &Config, datasets: &[ShotDataset], seed: u64) -> Result<CampaignFit> {
    let groups = group_runs(datasets)?;
    let runs = groups
        .par_iter()
        .map(|g| fit_run(cfg, g, seed))
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<_> = runs.iter().map(|r| r.estimate.clone()).collect();
    let resonance = fit_resonance(&resonance_points(&estimates))?;
    Ok(CampaignFit { runs, resonance })
}

pub fn run_record(r: &RunFit) -> EstimateRecord {
    let e = &r.estimate;
    let mut rec = EstimateRecord::from_estimate(&PosteriorEstimate {
        params: Vec::new(),
        diagnostics: r.flip.diagnostics.clone(),
        samples: Vec::new(),
    })
    .with("method", "combined")
    .with("converged", r.converged)
    .with("run", e.run)
    .with("detuning_label", &e.label)
    .with("optical_frequency_hz", format!("{:e}", e.optical_frequency / TAU));
    for (name, m) in [("delta_r", e.delta_r), ("stark", e.stark), ("leak_b", e.leak_b)] {
        let src = match name {
            "stark" => None,
            _ => r.flip.get(name),
        };
        rec.params.push(crate::inference::ParamSummary {
            name: name.to_string(),
            point: m.value,
            lo: m.value - m.unc,
            hi: m.value + m.unc,
            rhat: src.and_then(|p| p.rhat),
        });
    }
    rec
}

pub fn run_estimate_from_record(rec: &EstimateRecord) -> Result<RunEstimate> {
    let m = |name: &str| -> Result<Measured<f64>> {
        let p = rec.get(name)?;
        Ok(Measured::new(p.point, p.std_unc()))
    };
    let hz: f64 = rec.meta_parsed("optical_frequency_hz")?;
    Ok(RunEstimate {
        run: rec.meta_parsed("run")?,
        label: rec.meta_parsed("detuning_label")?,
        optical_frequency: TAU * hz,
        delta_r: m("delta_r")?,
        stark: m("stark")?,
        leak_b: m("leak_b")?,
    })
}

pub fn write_fit(dir: &Path, fit: &CampaignFit, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in &fit.runs {
        let run = r.estimate.run;
        let tag = |rec: EstimateRecord| {
            rec.with("run", run)
                .with("detuning_label", &r.estimate.label)
                .with("seed", seed)
        };
        write(
            &dir.join(format!("run{run:03}_flip.txt")),
            &tag(EstimateRecord::from_estimate(&r.flip)).to_file_string(),
        )?;
        for (b, e) in &r.echoes {
            write(
                &dir.join(format!("run{run:03}_echo_b{b}.txt")),
                &tag(EstimateRecord::from_estimate(e)).with("block", b).to_file_string(),
            )?;
        }
        write(&dir.join(format!("run{run:03}.txt")), &run_record(r).with("seed", seed).to_file_string())?;
    }
    write(
        &dir.join(RESONANCE_FILE),
        &report::resonance_to_kv(&fit.resonance).render(report::RESONANCE_HEADER),
    )
}

fn is_run_summary(path: &Path) -> bool {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("run"))
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Per-run estimates and the resonance fit from an estimates directory.
pub fn read_fit(dir: &Path) -> Result<(Vec<RunEstimate>, ResonanceFit)> {
    let mut runs = Vec::new();
    for path in list(dir, "txt")? {
        if is_run_summary(&path) {
            let rec = EstimateRecord::parse(&read(&path)?)
                .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
            runs.push(run_estimate_from_record(&rec)?);
        }
    }
    let kv = KeyValues::parse(&read(&dir.join(RESONANCE_FILE))?, report::RESONANCE_HEADER)?;
    Ok((runs, report::resonance_from_kv(&kv)?))
}

pub fn read_flip_record(dir: &Path, run: usize) -> Result<EstimateRecord> {
    EstimateRecord::parse(&read(&dir.join(format!("run{run:03}_flip.txt")))?)
}

pub fn read_echo_record(dir: &Path, run: usize, block: usize) -> Result<EstimateRecord> {
    EstimateRecord::parse(&read(&dir.join(format!("run{run:03}_echo_b{block}.txt")))?)
}

/// Summary mode when the config carries `[paper_inputs]`, otherwise the
/// per-run combination of `fit`.
pub fn derive(cfg: &Config, fit: Option<(&[RunEstimate], &ResonanceFit)>) -> Result<FinalResults> {
    let constants = cfg.constants()?;
    if let Some((gamma, branching)) = cfg.summary_inputs()? {
        return derive_from_summary(gamma, branching, &constants);
    }
    let (runs, resonance) =
        fit.ok_or_else(|| Error::Input("derive needs fit estimates or [paper_inputs]".into()))?;
    derive_results(runs, resonance, &cfg.ledger()?, &constants, cfg.derive_options())
}

pub fn write_results(dir: &Path, cfg: &Config, results: &FinalResults, generated_at: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let kv = report::results_to_kv(results, &cfg.ledger()?, generated_at);
    write(&dir.join(RESULTS_FILE), &kv.render(report::RESULTS_HEADER))
}

pub fn read_results(dir: &Path) -> Result<FinalResults> {
    let kv = KeyValues::parse(&read(&dir.join(RESULTS_FILE))?, report::RESULTS_HEADER)?;
    report::results_from_kv(&kv)
}

fn flip_curve(rec: &EstimateRecord, cfg: &Config) -> Result<FlipCurve> {
    let v = |n: &str| rec.get(n).map(|p| p.point);
    Ok(FlipCurve {
        params: DynamicsParams::new(RatePair::new(v("r_plus")?, v("r_minus")?)?, v("leak_b")?)?,
        spam: SpamModel::with_sink(v("dark_given_up")?, v("dark_given_down")?, cfg.spam.sink)?,
    })
}

fn echo_curve(rec: &EstimateRecord) -> Result<(f64, EchoParams<f64>)> {
    let v = |n: &str| rec.get(n).map(|p| p.point);
    Ok((
        v("stark")?,
        EchoParams {
            contrast: v("contrast")?,
            offset: v("offset")?,
            phase: v("phase")?,
            decay_rate: v("decay_rate")?,
        },
    ))
}

/// Writes `summary.txt`, `flip_curves.csv`, `echo_curves.csv`,
/// `resonance_points.csv` and `resonance_line.csv` into `out`. Dataset and estimate
/// directories are optional; the plots that need them are skipped.
pub fn write_report(
    out: &Path,
    cfg: &Config,
    results: &FinalResults,
    datasets_dir: Option<&Path>,
    estimates_dir: Option<&Path>,
    generated_at: &str,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ledger = cfg.ledger()?;
    let fit = estimates_dir.map(read_fit).transpose()?;
    write(
        &out.join(SUMMARY_FILE),
        &report::summary_text(results, fit.as_ref().map(|f| &f.1), &ledger, generated_at),
    )?;
    if let (Some(dd), Some(ed)) = (datasets_dir, estimates_dir) {
        let datasets = read_datasets(dd)?;
        let groups = group_runs(&datasets)?;
        let mut flips = Vec::new();
        let mut echoes = Vec::new();
        for g in &groups {
            let curve = flip_curve(&read_flip_record(ed, g.run)?, cfg)?;
            flips.push((g.run, g.up, Some(curve)));
            flips.push((g.run, g.down, Some(curve)));
            for (b, ds) in &g.echoes {
                echoes.push((g.run, *b, *ds, Some(echo_curve(&read_echo_record(ed, g.run, *b)?)?)));
            }
        }
        write(&out.join("flip_curves.csv"), &report::flip_plot_csv(&flips)?)?;
        write(&out.join("echo_curves.csv"), &report::echo_plot_csv(&echoes))?;
    }
    if let Some((runs, resonance)) = &fit {
        let pts: Vec<_> = runs
            .iter()
            .zip(resonance_points(runs))
            .map(|(r, p)| (r.run, r.label.clone(), p))
            .collect();
        let (points, line) = report::resonance_plot_csv(&pts, resonance, 101)?;
        write(&out.join("resonance_points.csv"), &points)?;
        write(&out.join("resonance_line.csv"), &line)?;
    }
    Ok(())
}
