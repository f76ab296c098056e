//! `iondyne`: simulate, fit, derive and report from a TOML config.
//!
//! Every stage writes one subdirectory of `--out` (`datasets`, `estimates`,
//! `results`, `report`). Outputs are written into a hidden staging
//! directory and renamed into place only when the stage succeeds. On
//! failure a JSON error record goes to stderr and to `<out>/error.json`,
//! and the exit status is nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use iondyne::config::Config;
use iondyne::pipeline;

#[derive(Debug, Parser)]
#[command(name = "iondyne", version, about)]
struct Cli {
    #[command(subcommand)]
    stage: Stage,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Work directory holding the stage subdirectories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write `generated_at = fixed` instead of the current time.
    #[arg(long, global = true)]
    fixed_clock: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Stage {
    /// Simulate the configured campaign into `datasets/`.
    Simulate,
    /// Fit `datasets/` into `estimates/`.
    Fit,
    /// Combine `estimates/` (or `[paper_inputs]`) into `results/`.
    Derive,
    /// Summary and plot tables from the other stages into `report/`.
    Report,
}

impl Stage {
    fn dir(self) -> &'static str {
        match self {
            Stage::Simulate => pipeline::DATASETS_DIR,
            Stage::Fit => pipeline::ESTIMATES_DIR,
            Stage::Derive => pipeline::RESULTS_DIR,
            Stage::Report => pipeline::REPORT_DIR,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Fit => "fit",
            Stage::Derive => "derive",
            Stage::Report => "report",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match run(&cli, &out) {
        Ok(()) => {
            let _ = std::fs::remove_file(out.join("error.json"));
            ExitCode::SUCCESS
        }
        Err(err) => {
            let record = error_record(cli.stage, &err);
            eprintln!("{record}");
            if std::fs::create_dir_all(&out).is_ok() {
                let tmp = out.join(format!(".error.json.tmp-{}", std::process::id()));
                if std::fs::write(&tmp, format!("{record}\n")).is_ok() {
                    let _ = std::fs::rename(&tmp, out.join("error.json"));
                }
            }
            ExitCode::FAILURE
        }
    }
}

fn error_record(stage: Stage, err: &anyhow::Error) -> serde_json::Value {
    let lib = err.chain().find_map(|e| e.downcast_ref::<iondyne::Error>());
    let field = match lib {
        Some(iondyne::Error::Config { field, .. }) => Some(field.clone()),
        _ => None,
    };
    serde_json::json!({
        "status": "error",
        "stage": stage.name(),
        "kind": lib.map_or("usage", |e| e.kind()),
        "field": field,
        "message": format!("{err:#}"),
    })
}

fn run(cli: &Cli, out: &Path) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n >= 1, "--threads must be >= 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let config_path = cli.config.as_ref().context("--config <path> is required")?;
    let cfg = Config::load(config_path)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let generated_at = if cli.fixed_clock {
        "fixed".to_string()
    } else {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("unix:{secs}")
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stage = cli.stage;
    let staging = out.join(format!(".{}.tmp-{}", stage.dir(), std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    let result = write_stage(stage, &cfg, seed, out, &staging, &generated_at);
    match result {
        Ok(()) => promote(&staging, &out.join(stage.dir())),
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn write_stage(
    stage: Stage,
    cfg: &Config,
    seed: u64,
    out: &Path,
    staging: &Path,
    generated_at: &str,
) -> anyhow::Result<()> {
    let datasets = out.join(pipeline::DATASETS_DIR);
    let estimates = out.join(pipeline::ESTIMATES_DIR);
    let results = out.join(pipeline::RESULTS_DIR);
    match stage {
        Stage::Simulate => {
            let data = pipeline::simulate(cfg, seed)?;
            pipeline::write_datasets(staging, &data)?;
        }
        Stage::Fit => {
            let data = pipeline::read_datasets(&datasets)?;
            let fit = pipeline::fit_campaign(cfg, &data, seed)?;
            pipeline::write_fit(staging, &fit, seed)?;
        }
        Stage::Derive => {
            let fit = if cfg.paper_inputs.is_some() {
                None
            } else {
                Some(pipeline::read_fit(&estimates)?)
            };
            let r = pipeline::derive(cfg, fit.as_ref().map(|(runs, res)| (runs.as_slice(), res)))?;
            pipeline::write_results(staging, cfg, &r, generated_at)?;
        }
        Stage::Report => {
            let r = pipeline::read_results(&results)?;
            let have_estimates = estimates.join(pipeline::RESONANCE_FILE).is_file();
            let have_datasets = datasets.is_dir();
            pipeline::write_report(
                staging,
                cfg,
                &r,
                (have_datasets && have_estimates).then_some(datasets.as_path()),
                have_estimates.then_some(estimates.as_path()),
                generated_at,
            )?;
        }
    }
    Ok(())
}

/// Replaces `target` with `staging` using renames only.
fn promote(staging: &Path, target: &Path) -> anyhow::Result<()> {
    let parent = target.parent().unwrap_or_else(|| Path::new("."));
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("stage");
    let old = parent.join(format!(".{name}.old-{}", std::process::id()));
    if target.exists() {
        std::fs::rename(target, &old).with_context(|| format!("moving aside {}", target.display()))?;
    }
    std::fs::rename(staging, target).with_context(|| format!("promoting {}", target.display()))?;
    if old.exists() {
        std::fs::remove_dir_all(&old)?;
    }
    Ok(())
}
