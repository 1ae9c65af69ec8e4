use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use kvsim_core::probe::GbdtParams;

use crate::error::{CliError, Result};
use crate::scenario::Scenario;
use crate::{io, report, runner, training};

#[derive(Debug, Parser)]
#[command(
    name = "kvsim",
    version,
    about = "Continuous-batching serving simulator with a KV-cache exhaustion attacker"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario (every sweep point) and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `sim.seed` for every point.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a probe model from labeled windows found under a directory.
    ProbeTrain {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        min_window: usize,
        #[arg(long)]
        trees: Option<u32>,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also dump the feature table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare runs against a baseline run.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        baseline: PathBuf,
    },
    /// Write a scenario file that re-executes the run behind a report.
    ExportScenario {
        /// A run directory or its report.json.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_name(p: &std::path::Path) -> String {
    let dir = if p.is_dir() { p } else { p.parent().unwrap_or(p) };
    let mut parts: Vec<String> = dir
        .components()
        .rev()
        .take(2)
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    parts.reverse();
    parts.join("/")
}

pub fn execute(cli: Cli, out: &mut impl Write) -> Result<()> {
    let emit = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(|e| CliError::io("<stdout>", e));
    match cli.command {
        Command::Simulate { config, seed, out: dir } => {
            let sc = Scenario::load(&config)?;
            for d in runner::simulate(&sc, seed, &dir)? {
                emit(out, &format!("{}\n", d.display()))?;
            }
        }
        Command::ProbeTrain {
            traces,
            bins,
            out: model_path,
            min_window,
            trees,
            depth,
            learning_rate,
            seed,
            csv,
        } => {
            let d = GbdtParams::default();
            let hyper = GbdtParams {
                n_trees: trees.unwrap_or(d.n_trees),
                max_depth: depth.unwrap_or(d.max_depth),
                learning_rate: learning_rate.unwrap_or(d.learning_rate),
                seed: seed.unwrap_or(d.seed),
                ..d
            };
            let (outcome, samples) = training::train_dir(&traces, bins, min_window, &hyper)?;
            if let Some(p) = csv {
                io::write_training_csv(&p, &samples)?;
            }
            io::write_model(&model_path, &outcome.model)?;
            emit(out, &training::describe(&outcome))?;
        }
        Command::Report { runs, baseline } => {
            let base = report::load(&baseline)?;
            let mut rows = Vec::new();
            for r in &runs {
                rows.push(report::row(&run_name(r), &report::load(r)?, &base));
            }
            emit(out, &report::render(&rows))?;
        }
        Command::ExportScenario {
            report: src,
            name,
            out: path,
        } => {
            let r = report::load(&src)?;
            let sc = Scenario::from_report(&name, &r);
            std::fs::write(&path, sc.to_toml()?).map_err(|e| CliError::io(&path, e))?;
        }
    }
    Ok(())
}
