//! On-disk formats: JSON-lines event logs, JSON reports and models, and the
//! CSV files (time series, workload traces, probe training data).

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use kvsim_core::probe::{LabeledSample, N_FEATURES};
use kvsim_core::sim::LabeledWindow;
use kvsim_core::workload::{self, TraceRow};
use kvsim_core::{Event, EventBody, EventLog, ProbeModel, RunReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const WINDOWS_FILE: &str = "windows.jsonl";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| CliError::parse(path, e))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::parse(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn write_events(path: &Path, log: &EventLog) -> Result<()> {
    write_lines(path, log.events())
}

pub fn read_events(path: &Path) -> Result<EventLog> {
    Ok(EventLog::from_events(read_lines::<Event>(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::parse(path, e))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::parse(path, e))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    read_json(path)
}

pub fn write_model(path: &Path, model: &ProbeModel) -> Result<()> {
    write_json(path, model)
}

pub fn read_model(path: &Path) -> Result<ProbeModel> {
    let m: ProbeModel = read_json(path)?;
    m.validate()?;
    Ok(m)
}

pub fn write_windows(path: &Path, windows: &[LabeledWindow]) -> Result<()> {
    write_lines(path, windows)
}

pub fn read_windows(path: &Path) -> Result<Vec<LabeledWindow>> {
    read_lines(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct Point {
    t_us: u64,
    value: f64,
}

pub fn write_series(path: &Path, points: &[(u64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (t_us, value) in points {
        w.serialize(Point {
            t_us: *t_us,
            value: *value,
        })
        .map_err(|e| CliError::parse(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_series(path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize::<Point>()
        .map(|p| p.map(|p| (p.t_us, p.value)).map_err(|e| CliError::parse(path, e)))
        .collect()
}

/// Plot-ready series derived from an event log, keyed by file stem.
pub fn series(log: &EventLog) -> Vec<(&'static str, Vec<(u64, f64)>)> {
    let (mut kv, mut waiting, mut running, mut itl) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for e in log.events() {
        if let EventBody::KvSample {
            used_fraction,
            duration_us,
            waiting: w,
            running: r,
            emitted,
            ..
        } = e.body
        {
            kv.push((e.t_us, used_fraction));
            waiting.push((e.t_us, f64::from(w)));
            running.push((e.t_us, f64::from(r)));
            if emitted > 0 {
                itl.push((e.t_us, duration_us as f64));
            }
        }
    }
    vec![
        ("kv_usage", kv),
        ("queue_waiting", waiting),
        ("queue_running", running),
        ("itl_us", itl),
    ]
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRecord {
    t_us: u64,
    prompt_len: u32,
    output_len: u32,
    tenant: String,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<TraceRecord>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| workload::WorkloadError::TraceParse {
            row,
            reason: e.to_string(),
        })?;
        let (class, tenant) =
            TraceRow::parse_tenant(&rec.tenant).ok_or_else(|| workload::WorkloadError::TraceParse {
                row,
                reason: format!("bad tenant `{}`", rec.tenant),
            })?;
        rows.push(TraceRow {
            t_us: rec.t_us,
            prompt_len: rec.prompt_len,
            output_len: rec.output_len,
            class,
            tenant,
        });
    }
    workload::validate_trace(&rows)?;
    Ok(rows)
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(TraceRecord {
            t_us: r.t_us,
            prompt_len: r.prompt_len,
            output_len: r.output_len,
            tenant: r.tenant_field(),
        })
        .map_err(|e| CliError::parse(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Training data as `feature_0..feature_7,true_bin`.
pub fn write_training_csv(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = (0..N_FEATURES).map(|i| format!("feature_{i}")).collect();
    header.push("true_bin".into());
    w.write_record(&header).map_err(|e| CliError::parse(path, e))?;
    for s in samples {
        let mut rec: Vec<String> = s.features.iter().map(|f| f.to_string()).collect();
        rec.push(s.true_bin.to_string());
        w.write_record(&rec).map_err(|e| CliError::parse(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_training_csv(path: &Path) -> Result<Vec<LabeledSample>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        let bad = |what: &str| CliError::parse(path, format!("row {}: {what}", i + 1));
        if rec.len() != N_FEATURES + 1 {
            return Err(bad("expected 9 columns"));
        }
        let mut features = [0.0; N_FEATURES];
        for (f, v) in features.iter_mut().zip(rec.iter()) {
            *f = v.parse().map_err(|_| bad("bad feature"))?;
        }
        let true_bin = rec[N_FEATURES].parse().map_err(|_| bad("bad bin"))?;
        out.push(LabeledSample { features, true_bin });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kvsim_core::{RequestId, TenantClass};

    #[test]
    fn events_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EventLog::new();
        log.push(
            3,
            Some(RequestId(1)),
            EventBody::Arrival {
                class: TenantClass::Benign,
                prompt_len: 5,
                output_len: 9,
            },
        );
        log.push(4, None, EventBody::RunEnd { iterations: 1 });
        let p = dir.path().join("e.jsonl");
        write_events(&p, &log).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 2);
        assert_eq!(read_events(&p).unwrap(), log);
    }

    #[test]
    fn series_header_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let pts = vec![(0, 0.5), (100, 0.25)];
        write_series(&p, &pts).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("t_us,value\n"));
        assert_eq!(read_series(&p).unwrap(), pts);
    }

    #[test]
    fn trace_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![
            TraceRow {
                t_us: 0,
                prompt_len: 10,
                output_len: 20,
                class: TenantClass::Benign,
                tenant: Some(3),
            },
            TraceRow {
                t_us: 5,
                prompt_len: 1,
                output_len: 2,
                class: TenantClass::Attacker,
                tenant: None,
            },
        ];
        write_trace(&p, &rows).unwrap();
        assert!(fs::read_to_string(&p)
            .unwrap()
            .starts_with("t_us,prompt_len,output_len,tenant\n"));
        assert_eq!(read_trace(&p).unwrap(), rows);

        fs::write(&p, "t_us,prompt_len,output_len,tenant\n0,x,1,benign\n").unwrap();
        assert!(matches!(read_trace(&p), Err(CliError::Config(_))));
        fs::write(&p, "t_us,prompt_len,output_len,tenant\n0,1,1,alien\n").unwrap();
        assert!(read_trace(&p).is_err());
    }

    #[test]
    fn training_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let s = vec![LabeledSample {
            features: [1.5, 2.0, 3.0, 0.1, 1.0, 4.0, 2.0, -0.25],
            true_bin: 7,
        }];
        write_training_csv(&p, &s).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text
            .starts_with("feature_0,feature_1,feature_2,feature_3,feature_4,feature_5,feature_6,feature_7,true_bin\n"));
        assert_eq!(read_training_csv(&p).unwrap(), s);
    }
}
