//! Side-by-side comparison of finished runs.

use std::fmt::Write as _;
use std::path::Path;

use kvsim_core::metrics::{self, Summary};
use kvsim_core::RunReport;

use crate::error::Result;
use crate::io;

pub const COLUMNS: [&str; 7] = [
    "TTFT",
    "TTFT P99",
    "TPOT",
    "TPOT P99",
    "Preempt#",
    "Attack Request#",
    "Cost",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub ttft_s: Option<f64>,
    pub ttft_p99_s: Option<f64>,
    pub tpot_ms: Option<f64>,
    pub tpot_p99_ms: Option<f64>,
    pub preemptions: u64,
    pub attack_requests: u64,
    pub cost_usd: Option<f64>,
    pub delta_ttft: Option<f64>,
    pub delta_tpot: Option<f64>,
}

/// Reads `report.json` from a run directory (or takes the file itself).
pub fn load(path: &Path) -> Result<RunReport> {
    if path.is_dir() {
        io::read_report(&path.join(io::REPORT_FILE))
    } else {
        io::read_report(path)
    }
}

pub fn row(name: &str, r: &RunReport, baseline: &RunReport) -> Row {
    let b = r.aggregate.benign();
    let pick = |s: Option<Summary>, f: fn(&Summary) -> f64, scale: f64| s.map(|s| f(&s) / scale);
    let slow = metrics::slowdown(&r.aggregate, &baseline.aggregate).ok();
    let attack = r.aggregate.attack.as_ref();
    Row {
        name: name.into(),
        ttft_s: pick(b.ttft, |s| s.mean, 1e6),
        ttft_p99_s: pick(b.ttft, |s| s.p99, 1e6),
        tpot_ms: pick(b.tpot, |s| s.mean, 1e3),
        tpot_p99_ms: pick(b.tpot, |s| s.p99, 1e3),
        preemptions: r.aggregate.total_preemptions,
        attack_requests: attack.map_or(0, |a| a.payloads()),
        cost_usd: attack.map(|a| a.cost_usd),
        delta_ttft: slow.map(|s| s.ttft),
        delta_tpot: slow.map(|s| s.tpot),
    }
}

fn num(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "---".into(), |v| format!("{v:.digits$}"))
}

fn times(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.2}x"))
}

/// Fixed-width text table. TTFT in seconds, TPOT in milliseconds, cost in USD.
pub fn render(rows: &[Row]) -> String {
    let mut header = vec!["Run".to_string()];
    header.extend(COLUMNS.iter().map(|c| c.to_string()));
    header.push("ΔTTFT".into());
    header.push("ΔTPOT".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                num(r.ttft_s, 2),
                num(r.ttft_p99_s, 2),
                num(r.tpot_ms, 2),
                num(r.tpot_p99_ms, 2),
                r.preemptions.to_string(),
                r.attack_requests.to_string(),
                num(r.cost_usd, 4),
                times(r.delta_ttft),
                times(r.delta_tpot),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            std::iter::once(&header[i])
                .chain(body.iter().map(|row| &row[i]))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header);
    for r in &body {
        line(r);
    }
    out.push_str("TTFT in s, TPOT in ms, Cost in $; Δ relative to the baseline run\n");
    out
}
