//! Executes scenario points and writes their artifacts.
//!
//! Layout per point: `<out>/<scenario>/<point>/` holding `events.jsonl`,
//! `report.json`, `scenario.toml` (the exact point, re-runnable on its own),
//! `series/*.csv` and, when labeling is on, `windows.jsonl`.

use std::path::{Path, PathBuf};

use kvsim_core::sim::{self, RunInputs};
use kvsim_core::workload::ArrivalProcess;
use kvsim_core::{RunReport, SimConfig};
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::io;
use crate::scenario::{Point, Scenario};

pub const THREADS_ENV: &str = "KVSIM_THREADS";

/// Runs one configuration, reading its trace file if it has one.
pub fn run_config(cfg: SimConfig) -> Result<RunReport> {
    let trace_rows = match &cfg.workload.arrival {
        ArrivalProcess::Trace { path } => Some(io::read_trace(Path::new(path))?),
        _ => None,
    };
    Ok(sim::run_with(
        cfg,
        RunInputs {
            trace_rows,
            probe_model: None,
        },
    )?)
}

pub fn write_run(dir: &Path, name: &str, report: &RunReport) -> Result<()> {
    io::write_events(&dir.join(io::EVENTS_FILE), &report.events)?;
    io::write_json(&dir.join(io::REPORT_FILE), report)?;
    for (stem, pts) in io::series(&report.events) {
        io::write_series(&dir.join("series").join(format!("{stem}.csv")), &pts)?;
    }
    if report.config.trace.label_clients > 0 {
        io::write_windows(&dir.join(io::WINDOWS_FILE), &report.windows)?;
    }
    let toml = Scenario::from_report(name, report).to_toml()?;
    let path = dir.join("scenario.toml");
    std::fs::write(&path, toml).map_err(|e| CliError::io(path, e))
}

/// Thread count from `KVSIM_THREADS`, `None` when unset (rayon default).
pub fn thread_limit() -> Result<Option<usize>> {
    parse_threads(std::env::var(THREADS_ENV).ok().as_deref())
}

fn parse_threads(v: Option<&str>) -> Result<Option<usize>> {
    match v {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Invalid(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Runs every point of `scenario` (in parallel, capped by `KVSIM_THREADS`)
/// and returns the run directories in sweep order.
pub fn simulate(scenario: &Scenario, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let mut points = scenario.points()?;
    if let Some(s) = seed {
        for p in &mut points {
            p.sim.seed = s;
        }
    }
    let base = out.join(&scenario.name);
    let job = |p: &Point| -> Result<PathBuf> {
        let dir = base.join(&p.label);
        let report = run_config(p.sim.clone())?;
        write_run(&dir, &format!("{}-{}", scenario.name, p.label), &report)?;
        Ok(dir)
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_limit()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| points.par_iter().map(job).collect())
}
