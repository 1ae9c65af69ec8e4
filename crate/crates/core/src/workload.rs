//! Benign traffic.
//!
//! Open-loop clients arrive as independent Poisson processes (one stream per
//! client, merged by time). Closed-loop clients keep exactly one request in
//! flight and re-issue after a think time. Trace replay takes pre-parsed rows;
//! reading the CSV file is the caller's job.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Reverse;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::request::{TenantClass, TenantId};
use crate::rng::{StreamRng, StreamSeed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("unknown length preset `{0}`")]
    UnknownPreset(String),
    #[error("trace row {row}: {reason}")]
    TraceParse { row: usize, reason: String },
    #[error("trace arrival process needs rows supplied by the caller")]
    TraceMissing,
    #[error("invalid workload: {0}")]
    Invalid(&'static str),
}

/// Hour-of-day intensity tiers of a production chat trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileTier {
    Low,
    Medium,
    High,
}

impl ProfileTier {
    /// Conversations per hour per client.
    pub fn conversations_per_hour(&self) -> f64 {
        match self {
            ProfileTier::Low => 13.7,
            ProfileTier::Medium => 47.9,
            ProfileTier::High => 115.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArrivalProcess {
    None,
    /// Per-client rate.
    Poisson {
        rate_per_s: f64,
    },
    Profile {
        tier: ProfileTier,
    },
    /// CSV `t_us,prompt_len,output_len,tenant`.
    Trace {
        path: String,
    },
    ClosedLoop {
        concurrency: u32,
        #[serde(default)]
        think_us: u64,
    },
}

/// Lognormal given by its median and log-space sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalSpec {
    pub median: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthDist {
    pub prompt: LogNormalSpec,
    pub output: LogNormalSpec,
}

/// Synthetic stand-ins for short instruction data and long dialogue data.
pub fn preset(name: &str) -> Result<LengthDist, WorkloadError> {
    let ln = |median, sigma| LogNormalSpec { median, sigma };
    match name {
        "alpaca-like" => Ok(LengthDist {
            prompt: ln(50.0, 0.6),
            output: ln(250.0, 0.6),
        }),
        "sharegpt-like" => Ok(LengthDist {
            prompt: ln(300.0, 0.9),
            output: ln(800.0, 0.7),
        }),
        other => Err(WorkloadError::UnknownPreset(other.into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub arrival: ArrivalProcess,
    pub length_preset: String,
    /// Overrides `length_preset` when set.
    pub lengths: Option<LengthDist>,
    pub n_clients: u32,
    pub max_model_len: u32,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            arrival: ArrivalProcess::Poisson { rate_per_s: 0.05 },
            length_preset: "alpaca-like".into(),
            lengths: None,
            n_clients: 16,
            max_model_len: 8192,
        }
    }
}

impl WorkloadConfig {
    pub fn length_dist(&self) -> Result<LengthDist, WorkloadError> {
        match self.lengths {
            Some(d) => Ok(d),
            None => preset(&self.length_preset),
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let d = self.length_dist()?;
        for s in [d.prompt, d.output] {
            if !(s.median.is_finite() && s.median >= 1.0 && s.sigma.is_finite() && s.sigma >= 0.0) {
                return Err(WorkloadError::Invalid("length medians must be >= 1 and sigmas >= 0"));
            }
        }
        if self.max_model_len < 2 {
            return Err(WorkloadError::Invalid("workload.max_model_len must be >= 2"));
        }
        match &self.arrival {
            ArrivalProcess::Poisson { rate_per_s } if !(rate_per_s.is_finite() && *rate_per_s > 0.0) => {
                Err(WorkloadError::Invalid("workload.arrival.rate_per_s must be > 0"))
            }
            ArrivalProcess::ClosedLoop { concurrency: 0, .. } => {
                Err(WorkloadError::Invalid("workload.arrival.concurrency must be >= 1"))
            }
            _ => Ok(()),
        }
    }

    /// Aggregate benign arrival rate; zero for trace and closed-loop traffic.
    pub fn aggregate_rate_per_s(&self) -> f64 {
        match &self.arrival {
            ArrivalProcess::Poisson { rate_per_s } => rate_per_s * f64::from(self.n_clients),
            ArrivalProcess::Profile { tier } => tier.conversations_per_hour() / 3600.0 * f64::from(self.n_clients),
            _ => 0.0,
        }
    }
}

/// A request the workload wants submitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spawn {
    pub t_us: u64,
    pub class: TenantClass,
    pub tenant: TenantId,
    pub client: Option<u32>,
    pub prompt_len: u32,
    pub output_len: u32,
}

/// One row of a trace file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub t_us: u64,
    pub prompt_len: u32,
    pub output_len: u32,
    pub class: TenantClass,
    pub tenant: Option<u32>,
}

impl TraceRow {
    /// Parses the `tenant` column: `class` or `class:id`.
    pub fn parse_tenant(field: &str) -> Option<(TenantClass, Option<u32>)> {
        match field.split_once(':') {
            Some((c, id)) => Some((TenantClass::parse(c.trim())?, Some(id.trim().parse().ok()?))),
            None => Some((TenantClass::parse(field.trim())?, None)),
        }
    }

    pub fn tenant_field(&self) -> String {
        match self.tenant {
            Some(id) => alloc::format!("{}:{}", self.class.as_str(), id),
            None => self.class.as_str().into(),
        }
    }

    fn to_spawn(self) -> Spawn {
        let tenant = match (self.class, self.tenant) {
            (_, Some(id)) => TenantId(id),
            (TenantClass::Benign, None) => TenantId(0),
            (_, None) => TenantId::ATTACKER,
        };
        Spawn {
            t_us: self.t_us,
            class: self.class,
            tenant,
            client: None,
            prompt_len: self.prompt_len,
            output_len: self.output_len,
        }
    }

    pub fn from_spawn(s: &Spawn) -> Self {
        Self {
            t_us: s.t_us,
            prompt_len: s.prompt_len,
            output_len: s.output_len,
            class: s.class,
            tenant: Some(s.tenant.0),
        }
    }
}

/// Checks ordering and lengths of parsed rows.
pub fn validate_trace(rows: &[TraceRow]) -> Result<(), WorkloadError> {
    for (i, r) in rows.iter().enumerate() {
        if r.prompt_len == 0 || r.output_len == 0 {
            return Err(WorkloadError::TraceParse {
                row: i + 1,
                reason: "lengths must be >= 1".into(),
            });
        }
        if i > 0 && rows[i - 1].t_us > r.t_us {
            return Err(WorkloadError::TraceParse {
                row: i + 1,
                reason: "timestamps must be non-decreasing".into(),
            });
        }
    }
    Ok(())
}

/// Lognormal truncated to `[1, max]` by rejection, clamped after 64 misses.
fn sample_len(d: &LogNormal<f64>, max: u32, rng: &mut StreamRng) -> u32 {
    for _ in 0..64 {
        let x = libm::round(d.sample(rng));
        if x >= 1.0 && x <= f64::from(max) {
            return x as u32;
        }
    }
    (libm::round(d.sample(rng)) as i64).clamp(1, i64::from(max)) as u32
}

#[derive(Debug, Clone)]
struct Lengths {
    prompt: LogNormal<f64>,
    output: LogNormal<f64>,
    max_len: u32,
}

impl Lengths {
    fn new(d: LengthDist, max_len: u32) -> Self {
        let ln = |s: LogNormalSpec| LogNormal::new(libm::log(s.median), s.sigma).expect("validated lognormal");
        Self {
            prompt: ln(d.prompt),
            output: ln(d.output),
            max_len,
        }
    }

    fn sample(&self, rng: &mut StreamRng) -> (u32, u32) {
        let p = sample_len(&self.prompt, self.max_len - 1, rng);
        let o = sample_len(&self.output, self.max_len - p, rng);
        (p, o)
    }
}

#[derive(Debug, Clone)]
enum Source {
    Empty,
    Open { gap: Exp<f64> },
    Closed { think_us: u64 },
    Trace { rows: Vec<TraceRow>, pos: usize },
}

#[derive(Debug, Clone)]
pub struct WorkloadGenerator {
    source: Source,
    lengths: Lengths,
    clients: Vec<StreamRng>,
    /// (next arrival time, client)
    pending: BinaryHeap<Reverse<(u64, u32)>>,
    horizon_us: u64,
}

impl WorkloadGenerator {
    pub fn new(
        cfg: &WorkloadConfig,
        seed: &StreamSeed,
        horizon_us: u64,
        trace: Option<Vec<TraceRow>>,
    ) -> Result<Self, WorkloadError> {
        cfg.validate()?;
        let lengths = Lengths::new(cfg.length_dist()?, cfg.max_model_len);
        let stream =
            |n: u32| -> Vec<StreamRng> { (0..n).map(|i| seed.stream_indexed("workload", u64::from(i))).collect() };
        let mut gen = Self {
            source: Source::Empty,
            lengths,
            clients: Vec::new(),
            pending: BinaryHeap::new(),
            horizon_us,
        };
        match &cfg.arrival {
            ArrivalProcess::None => {}
            ArrivalProcess::Poisson { .. } | ArrivalProcess::Profile { .. } => {
                let rate = cfg.aggregate_rate_per_s() / f64::from(cfg.n_clients.max(1));
                if cfg.n_clients > 0 {
                    let gap = Exp::new(rate / 1e6).map_err(|_| WorkloadError::Invalid("arrival rate"))?;
                    gen.clients = stream(cfg.n_clients);
                    gen.source = Source::Open { gap };
                    for c in 0..cfg.n_clients {
                        gen.schedule_open(c, 0);
                    }
                }
            }
            ArrivalProcess::ClosedLoop { concurrency, think_us } => {
                gen.clients = stream(*concurrency);
                gen.source = Source::Closed { think_us: *think_us };
                for c in 0..*concurrency {
                    gen.pending.push(Reverse((0, c)));
                }
            }
            ArrivalProcess::Trace { .. } => {
                let rows = trace.ok_or(WorkloadError::TraceMissing)?;
                validate_trace(&rows)?;
                gen.source = Source::Trace { rows, pos: 0 };
            }
        }
        Ok(gen)
    }

    fn schedule_open(&mut self, client: u32, after_us: u64) {
        let Source::Open { gap } = &self.source else { return };
        let dt = gap.sample(&mut self.clients[client as usize]);
        let t = after_us.saturating_add(libm::round(dt) as u64);
        if t <= self.horizon_us {
            self.pending.push(Reverse((t, client)));
        }
    }

    /// Time of the next arrival, if any.
    pub fn peek_time(&self) -> Option<u64> {
        match &self.source {
            Source::Trace { rows, pos } => rows.get(*pos).map(|r| r.t_us).filter(|t| *t <= self.horizon_us),
            _ => self.pending.peek().map(|Reverse((t, _))| *t),
        }
    }

    /// Next arrival in time order.
    pub fn next_arrival(&mut self) -> Option<Spawn> {
        if let Source::Trace { rows, pos } = &mut self.source {
            let row = *rows.get(*pos)?;
            if row.t_us > self.horizon_us {
                return None;
            }
            *pos += 1;
            return Some(row.to_spawn());
        }
        let Reverse((t, client)) = self.pending.pop()?;
        let (prompt_len, output_len) = self.lengths.sample(&mut self.clients[client as usize]);
        if matches!(self.source, Source::Open { .. }) {
            self.schedule_open(client, t);
        }
        Some(Spawn {
            t_us: t,
            class: TenantClass::Benign,
            tenant: TenantId(client),
            client: Some(client),
            prompt_len,
            output_len,
        })
    }

    /// Arrivals with timestamps at or before `t_us`.
    pub fn pop_until(&mut self, t_us: u64) -> Vec<Spawn> {
        let mut v = Vec::new();
        while self.peek_time().is_some_and(|t| t <= t_us) {
            v.extend(self.next_arrival());
        }
        v
    }

    /// Closed-loop clients re-issue `think_us` after their request completes
    /// (or is refused).
    pub fn on_complete(&mut self, client: u32, t_us: u64) {
        if let Source::Closed { think_us } = self.source {
            let t = t_us.saturating_add(think_us);
            if t <= self.horizon_us {
                self.pending.push(Reverse((t, client)));
            }
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.peek_time().is_none()
    }
}
