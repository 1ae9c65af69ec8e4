//! Probe training from labeled windows written by `simulate`.

use std::fs;
use std::path::{Path, PathBuf};

use kvsim_core::probe::{self, BinEdges, GbdtParams, LabeledSample, TrainOutcome};

use crate::error::{CliError, Result};
use crate::io;

/// Every `windows.jsonl` below `dir`, in path order.
pub fn window_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| CliError::io(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CliError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == io::WINDOWS_FILE) {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn load_samples(dir: &Path, edges: &[f64], min_window: usize) -> Result<Vec<LabeledSample>> {
    let files = window_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Invalid(format!(
            "no {} under {}; run simulate with trace.label_clients > 0",
            io::WINDOWS_FILE,
            dir.display()
        )));
    }
    let mut samples = Vec::new();
    for f in files {
        for w in io::read_windows(&f)? {
            samples.push(w.labeled(edges, min_window)?);
        }
    }
    Ok(samples)
}

pub fn train_dir(
    dir: &Path,
    n_bins: usize,
    min_window: usize,
    hyper: &GbdtParams,
) -> Result<(TrainOutcome, Vec<LabeledSample>)> {
    if n_bins < 2 {
        return Err(CliError::Invalid("--bins must be at least 2".into()));
    }
    let edges = BinEdges::Uniform.edges(n_bins, 1.0);
    let samples = load_samples(dir, &edges, min_window)?;
    let out = probe::train(&samples, &edges, min_window, hyper)?;
    Ok((out, samples))
}

/// Accuracy line plus the held-out confusion matrix, rows = true bin.
pub fn describe(out: &TrainOutcome) -> String {
    let mut s = format!(
        "held-out accuracy {:.4} ({} train / {} test)\nconfusion (rows true bin, columns predicted):\n",
        out.holdout_accuracy, out.n_train, out.n_test
    );
    for (i, row) in out.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
        s.push_str(&format!("{i:>3} |{}\n", cells.join("")));
    }
    s
}
