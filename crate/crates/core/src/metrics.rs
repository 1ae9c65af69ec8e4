//! Per-request service metrics and run aggregates.
//!
//! Censoring at the horizon: a request with a first token counts towards TTFT
//! even if unfinished; one without is starved. TPOT and E2E come from finished
//! requests only.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacker::{AttackSummary, Tier};
use crate::events::{EventBody, EventLog};
use crate::request::{Request, RequestId, RequestState, TenantClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("request {0} has not finished")]
    NotFinished(RequestId),
    #[error("percentile of an empty list")]
    EmptyInput,
    #[error("percentile must be in (0, 100]")]
    BadPercentile,
    #[error("baseline has zero or missing benign latency")]
    ZeroBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub request_id: RequestId,
    pub tenant_class: TenantClass,
    pub tier: Option<Tier>,
    pub arrival_us: u64,
    pub ttft_us: Option<u64>,
    /// Needs at least two output tokens.
    pub tpot_us: Option<f64>,
    pub itl_p99_us: Option<u64>,
    pub e2e_us: Option<u64>,
    pub n_output_tokens: u32,
    pub preempt_count: u32,
    pub finished: bool,
}

/// Metrics of a finished request.
pub fn finalize(req: &Request) -> Result<MetricsRecord, MetricsError> {
    if req.state != RequestState::Finished {
        return Err(MetricsError::NotFinished(req.id));
    }
    Ok(record(req))
}

/// Metrics of any request, finished or not, as of now.
pub fn record(req: &Request) -> MetricsRecord {
    let n = req.generated_len;
    let tpot_us = match (req.first_token_us, req.last_token_us) {
        (Some(f), Some(l)) if n >= 2 => Some((l - f) as f64 / f64::from(n - 1)),
        _ => None,
    };
    let gaps: Vec<u64> = req.itl_trace.iter().map(|e| e.gap_us).collect();
    MetricsRecord {
        request_id: req.id,
        tenant_class: req.tenant_class,
        tier: req.tier,
        arrival_us: req.arrival_us,
        ttft_us: req.first_token_us.map(|t| t - req.arrival_us),
        tpot_us,
        itl_p99_us: percentile_u64(&gaps, 99.0).ok(),
        e2e_us: req.finish_us.map(|t| t - req.arrival_us),
        n_output_tokens: n,
        preempt_count: req.preempt_count,
        finished: req.state == RequestState::Finished,
    }
}

/// Nearest-rank percentile: element `ceil(p/100 * n) - 1` of the sorted values.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricsError::BadPercentile);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[nearest_rank(v.len(), p)])
}

fn percentile_u64(values: &[u64], p: f64) -> Result<u64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    Ok(v[nearest_rank(v.len(), p)])
}

fn nearest_rank(n: usize, p: f64) -> usize {
    let rank = libm::ceil(p / 100.0 * n as f64) as usize;
    rank.clamp(1, n) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Order-independent: values are sorted before summing.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(Summary {
            n,
            mean: v.iter().sum::<f64>() / n as f64,
            median: v[nearest_rank(n, 50.0)],
            p99: v[nearest_rank(n, 99.0)],
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: TenantClass,
    pub submitted: u64,
    pub rejected: u64,
    pub finished: u64,
    pub in_flight: u64,
    pub starved: u64,
    /// Microseconds throughout.
    pub ttft: Option<Summary>,
    pub tpot: Option<Summary>,
    pub e2e: Option<Summary>,
    /// Times a request of this class was evicted.
    pub preemptions: u64,
    pub output_tokens_finished: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub classes: Vec<ClassReport>,
    pub total_preemptions: u64,
    pub hol_blocked_steps: u64,
    pub iterations: u64,
    pub duration_us: u64,
    /// Fraction of time spent in each tenth of KV usage; idle time counts as empty.
    pub kv_histogram: Vec<f64>,
    pub c_sat: f64,
    /// Fraction of time with usage at or above `c_sat`.
    pub band_occupancy: f64,
    /// Upward crossings of `c_sat`.
    pub c_sat_crossings: u64,
    pub mean_kv_usage: f64,
    pub attack: Option<AttackSummary>,
}

impl AggregateReport {
    pub fn class(&self, c: TenantClass) -> Option<&ClassReport> {
        self.classes.iter().find(|r| r.class == c)
    }

    pub fn benign(&self) -> &ClassReport {
        self.class(TenantClass::Benign)
            .expect("every report carries the benign class")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slowdown {
    pub ttft: f64,
    pub tpot: f64,
    pub e2e: Option<f64>,
}

/// Benign degradation of `report` relative to `baseline`.
pub fn slowdown(report: &AggregateReport, baseline: &AggregateReport) -> Result<Slowdown, MetricsError> {
    let mean = |r: &AggregateReport, f: fn(&ClassReport) -> Option<Summary>| f(r.benign()).map(|s| s.mean);
    let ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) if b > 0.0 => Ok(a / b),
        _ => Err(MetricsError::ZeroBaseline),
    };
    Ok(Slowdown {
        ttft: ratio(mean(report, |c| c.ttft), mean(baseline, |c| c.ttft))?,
        tpot: ratio(mean(report, |c| c.tpot), mean(baseline, |c| c.tpot))?,
        e2e: ratio(mean(report, |c| c.e2e), mean(baseline, |c| c.e2e)).ok(),
    })
}

/// Incremental accumulation of everything the aggregate needs. Fed by the
/// engine as the run proceeds, or replayed from an event log.
#[derive(Debug, Clone)]
pub struct Collector {
    c_sat: f64,
    per_class: BTreeMap<TenantClass, ClassAcc>,
    live: BTreeMap<RequestId, Live>,
    hol_blocked_steps: u64,
    iterations: u64,
    busy_us: u64,
    /// Integer microseconds per usage tenth, so both paths agree exactly.
    hist_us: [u64; 10],
    band_us: u64,
    usage_time_sum: f64,
    above: bool,
    crossings: u64,
}

#[derive(Debug, Clone, Default)]
struct ClassAcc {
    submitted: u64,
    rejected: u64,
    finished: u64,
    preemptions: u64,
    output_tokens: u64,
    ttft: Vec<f64>,
    tpot: Vec<f64>,
    e2e: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Live {
    class: TenantClass,
    arrival_us: u64,
    first_token_us: Option<u64>,
}

impl Collector {
    pub fn new(c_sat: f64) -> Self {
        let mut per_class = BTreeMap::new();
        per_class.insert(TenantClass::Benign, ClassAcc::default());
        Self {
            c_sat,
            per_class,
            live: BTreeMap::new(),
            hol_blocked_steps: 0,
            iterations: 0,
            busy_us: 0,
            hist_us: [0; 10],
            band_us: 0,
            usage_time_sum: 0.0,
            above: false,
            crossings: 0,
        }
    }

    fn acc(&mut self, c: TenantClass) -> &mut ClassAcc {
        self.per_class.entry(c).or_default()
    }

    pub fn arrival(&mut self, id: RequestId, class: TenantClass, t_us: u64) {
        self.acc(class).submitted += 1;
        self.live.insert(
            id,
            Live {
                class,
                arrival_us: t_us,
                first_token_us: None,
            },
        );
    }

    pub fn rejected(&mut self, id: RequestId) {
        if let Some(l) = self.live.remove(&id) {
            self.acc(l.class).rejected += 1;
        }
    }

    pub fn first_token(&mut self, id: RequestId, t_us: u64) {
        if let Some(l) = self.live.get_mut(&id) {
            l.first_token_us = Some(t_us);
        }
    }

    pub fn preempted(&mut self, class: TenantClass) {
        self.acc(class).preemptions += 1;
    }

    pub fn finished(&mut self, id: RequestId, t_us: u64, n_output: u32) {
        let Some(l) = self.live.remove(&id) else { return };
        let first = l.first_token_us.expect("finished requests have a first token");
        let a = self.acc(l.class);
        a.finished += 1;
        a.output_tokens += u64::from(n_output);
        a.ttft.push((first - l.arrival_us) as f64);
        a.e2e.push((t_us - l.arrival_us) as f64);
        if n_output >= 2 {
            a.tpot.push((t_us - first) as f64 / f64::from(n_output - 1));
        }
    }

    /// One executed iteration of `duration_us` at usage `u`.
    pub fn iteration(&mut self, u: f64, duration_us: u64, blocked: bool) {
        self.iterations += 1;
        self.busy_us += duration_us;
        if blocked {
            self.hol_blocked_steps += 1;
        }
        let bin = ((u * 10.0) as usize).min(9);
        self.hist_us[bin] += duration_us;
        self.usage_time_sum += u * duration_us as f64;
        let above = u >= self.c_sat;
        if above {
            self.band_us += duration_us;
            if !self.above {
                self.crossings += 1;
            }
        }
        self.above = above;
    }

    /// An idle stretch: nothing resident.
    pub fn idle(&mut self) {
        self.above = false;
    }

    pub fn report(&self, end_us: u64, attack: Option<AttackSummary>) -> AggregateReport {
        let mut hist_us = self.hist_us;
        hist_us[0] += end_us.saturating_sub(self.busy_us);
        let frac = |x: u64| if end_us == 0 { 0.0 } else { x as f64 / end_us as f64 };
        let mut in_flight: BTreeMap<TenantClass, (u64, u64)> = BTreeMap::new();
        for l in self.live.values() {
            let e = in_flight.entry(l.class).or_default();
            if l.first_token_us.is_some() {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        let classes = self
            .per_class
            .iter()
            .map(|(class, a)| {
                let (flying, starved) = in_flight.get(class).copied().unwrap_or_default();
                let mut ttft = a.ttft.clone();
                ttft.extend(
                    self.live
                        .values()
                        .filter(|l| l.class == *class)
                        .filter_map(|l| l.first_token_us.map(|f| (f - l.arrival_us) as f64)),
                );
                ClassReport {
                    class: *class,
                    submitted: a.submitted,
                    rejected: a.rejected,
                    finished: a.finished,
                    in_flight: flying,
                    starved,
                    ttft: Summary::of(&ttft),
                    tpot: Summary::of(&a.tpot),
                    e2e: Summary::of(&a.e2e),
                    preemptions: a.preemptions,
                    output_tokens_finished: a.output_tokens,
                }
            })
            .collect();
        AggregateReport {
            classes,
            total_preemptions: self.per_class.values().map(|a| a.preemptions).sum(),
            hol_blocked_steps: self.hol_blocked_steps,
            iterations: self.iterations,
            duration_us: end_us,
            kv_histogram: hist_us.iter().map(|x| frac(*x)).collect(),
            c_sat: self.c_sat,
            band_occupancy: frac(self.band_us),
            c_sat_crossings: self.crossings,
            mean_kv_usage: if end_us == 0 {
                0.0
            } else {
                self.usage_time_sum / end_us as f64
            },
            attack,
        }
    }

    /// Rebuilds the aggregate from a finished event log.
    pub fn replay(log: &EventLog, c_sat: f64) -> AggregateReport {
        let mut c = Collector::new(c_sat);
        let mut end = 0;
        let mut last_sample_end: Option<u64> = None;
        for e in log.events() {
            match (&e.body, e.request_id) {
                (EventBody::Arrival { class, .. }, Some(id)) => c.arrival(id, *class, e.t_us),
                (EventBody::Rejected { .. }, Some(id)) => c.rejected(id),
                (EventBody::FirstToken {}, Some(id)) => c.first_token(id, e.t_us),
                (EventBody::Preemption { class, .. }, _) => c.preempted(*class),
                (EventBody::Finish { n_output, .. }, Some(id)) => c.finished(id, e.t_us, *n_output),
                (
                    EventBody::KvSample {
                        used_fraction,
                        duration_us,
                        blocked,
                        ..
                    },
                    _,
                ) => {
                    // a gap since the previous sample means idle ticks in between
                    if last_sample_end.is_some_and(|t| t != e.t_us - duration_us) {
                        c.idle();
                    }
                    c.iteration(*used_fraction, *duration_us, *blocked);
                    last_sample_end = Some(e.t_us);
                }
                (EventBody::RunEnd { .. }, _) => end = e.t_us,
                _ => {}
            }
        }
        c.report(end, None)
    }
}
