//! Scenario files: a named `SimConfig`, an optional sweep over one parameter
//! and an optional baseline for slowdown figures.

use std::fs;
use std::path::{Path, PathBuf};

use kvsim_core::workload::ArrivalProcess;
use kvsim_core::{RunReport, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Dotted path into `sim`, e.g. `attacker.malicious_ratio`.
    pub parameter: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Name of the scenario whose runs serve as the slowdown reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

/// One concrete run of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    /// Directory name under the scenario, `run` when there is no sweep.
    pub label: String,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| CliError::parse(path, e.to_string().trim_end()))?;
        sc.check_name(path)?;
        Ok(sc)
    }

    /// Reads a scenario and resolves a relative trace path against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut sc = Self::parse(&text, path)?;
        if let ArrivalProcess::Trace { path: trace } = &mut sc.sim.workload.arrival {
            let p = PathBuf::from(&*trace);
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                *trace = base.join(p).to_string_lossy().into_owned();
            }
        }
        Ok(sc)
    }

    fn check_name(&self, path: &Path) -> Result<()> {
        let ok = !self.name.is_empty()
            && self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && self.name != "."
            && self.name != "..";
        if ok {
            Ok(())
        } else {
            Err(CliError::parse(
                path,
                format!("name `{}` must be a plain file name", self.name),
            ))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Invalid(format!("cannot serialize scenario: {e}")))
    }

    /// A single-run scenario that re-executes the run behind `report`.
    pub fn from_report(name: &str, report: &RunReport) -> Self {
        Scenario {
            name: name.into(),
            baseline: None,
            sim: report.config.clone(),
            sweep: None,
        }
    }

    /// Expands the sweep, validating every point.
    pub fn points(&self) -> Result<Vec<Point>> {
        let Some(sweep) = &self.sweep else {
            self.sim.validate()?;
            return Ok(vec![Point {
                label: "run".into(),
                sim: self.sim.clone(),
            }]);
        };
        if sweep.values.is_empty() {
            return Err(CliError::Invalid(format!(
                "sweep over `{}` has no values",
                sweep.parameter
            )));
        }
        let leaf = sweep.parameter.rsplit('.').next().unwrap_or(&sweep.parameter);
        let mut points = Vec::with_capacity(sweep.values.len());
        for v in &sweep.values {
            let sim = with_parameter(&self.sim, &sweep.parameter, v)?;
            sim.validate()?;
            points.push(Point {
                label: format!("{leaf}={}", label_of(v)),
                sim,
            });
        }
        let labels: Vec<String> = points.iter().map(|p| p.label.clone()).collect();
        for (i, p) in points.iter_mut().enumerate() {
            if labels.iter().filter(|l| **l == p.label).count() > 1 {
                p.label = format!("{}-{i}", p.label);
            }
        }
        Ok(points)
    }
}

/// Directory label for a sweep value. Tagged tables (`{ kind = "..." }`)
/// are labeled by their tag.
fn label_of(v: &toml::Value) -> String {
    let raw = match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Table(t) => match t.get("kind") {
            Some(toml::Value::String(k)) => k.clone(),
            _ => v.to_string(),
        },
        other => other.to_string(),
    };
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `base` with the dotted `path` replaced by `value`. Missing tables along
/// the way are created, so optional sections can be swept too.
pub fn with_parameter(base: &SimConfig, path: &str, value: &toml::Value) -> Result<SimConfig> {
    let bad = |msg: String| CliError::Invalid(format!("sweep parameter `{path}`: {msg}"));
    let mut root = toml::Value::try_from(base).map_err(|e| bad(e.to_string()))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad("empty path segment".into()));
    }
    let mut node = &mut root;
    for k in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| bad(format!("`{k}` is not inside a table")))?;
        node = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node.as_table_mut().ok_or_else(|| bad("parent is not a table".into()))?;
    table.insert(keys[keys.len() - 1].to_string(), value.clone());
    SimConfig::deserialize(root).map_err(|e| bad(format!("value {value} does not fit: {}", e.to_string().trim_end())))
}
