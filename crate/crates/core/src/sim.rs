//! The event loop.
//!
//! Time advances only through scheduler steps. A step at `t0` makes its
//! scheduling decisions, the latency model prices the batch, and the step
//! ends at `t1 = t0 + duration`, when every scheduled request has its token.
//! Arrivals that fall inside `(t0, t1]` queue up and are first seen by the
//! next step. With nothing runnable the clock moves by a fixed idle tick.
//!
//! Events of one step are logged in time order: decisions at `t0`, arrivals
//! inside the step, tokens and completions at `t1`, then whatever the
//! attacker does in reaction at `t1`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacker::{Action, AttackSummary, Attacker, AttackerConfig, Dispatch, Strategy, Tier};
use crate::events::{EventBody, EventLog};
use crate::kv::KvConfig;
use crate::latency::{itl_for_iteration, BatchLoad, LatencyModel, LatencyModelConfig};
use crate::metrics::{self, AggregateReport, Collector, MetricsRecord};
use crate::probe::{self, bin_of, BinEdges, LabeledSample, ProbeConfig, ProbeError, ProbeModel};
use crate::request::{Request, RequestId, TenantClass, TenantId};
use crate::rng::StreamSeed;
use crate::scheduler::{Scheduler, SchedulerConfig};
use crate::workload::{
    ArrivalProcess, LengthDist, LogNormalSpec, Spawn, TraceRow, WorkloadConfig, WorkloadError, WorkloadGenerator,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("probe: {0}")]
    Probe(#[from] ProbeError),
}

impl From<&'static str> for ConfigError {
    fn from(s: &'static str) -> Self {
        ConfigError::Invalid(s.into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Log every emitted token (large).
    pub token_events: bool,
    /// Benign clients below this index are tapped for usage-labeled ITL
    /// windows (ground truth for probe training). Zero disables labeling.
    pub label_clients: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon_us: u64,
    pub idle_tick_us: u64,
    /// Keep stepping past the horizon until every request is done (no new
    /// arrivals), up to ten horizons.
    pub drain: bool,
    pub kv: KvConfig,
    pub scheduler: SchedulerConfig,
    pub latency: LatencyModelConfig,
    pub workload: WorkloadConfig,
    pub attacker: AttackerConfig,
    pub probe: ProbeConfig,
    pub trace: TraceConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon_us: 600_000_000,
            idle_tick_us: 100,
            drain: false,
            kv: KvConfig::default(),
            scheduler: SchedulerConfig::default(),
            latency: LatencyModelConfig::default(),
            workload: WorkloadConfig::default(),
            attacker: AttackerConfig::default(),
            probe: ProbeConfig::default(),
            trace: TraceConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon_us == 0 {
            return Err("horizon_us must be > 0".into());
        }
        if self.idle_tick_us == 0 {
            return Err("idle_tick_us must be > 0".into());
        }
        self.kv.validate()?;
        self.scheduler.validate()?;
        self.latency.validate()?;
        self.workload.validate()?;
        self.attacker.validate()?;
        self.probe.validate()?;
        Ok(())
    }

    /// Noise-free duration of one decode iteration at usage `u`.
    pub fn expected_iteration_us(&self, u: f64) -> f64 {
        let ctx = libm::round(u * self.kv.capacity_tokens() as f64) as u64;
        self.latency.base_duration_us(&BatchLoad::new(ctx, 0, 0))
    }
}

/// Data a run needs that the core cannot load itself.
#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    pub trace_rows: Option<Vec<TraceRow>>,
    pub probe_model: Option<ProbeModel>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    pub now_us: u64,
    pub iteration_index: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub t_start_us: u64,
    pub t_end_us: u64,
    pub idle: bool,
    pub used_fraction: f64,
    pub admitted: u32,
    pub preempted: u32,
    pub emitted: u32,
    pub finished: u32,
    pub blocked: bool,
}

/// A probe window and the true usage at its midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub gaps_us: Vec<u64>,
    pub usage: f64,
}

impl LabeledWindow {
    pub fn labeled(&self, edges: &[f64], min_window: usize) -> Result<LabeledSample, ProbeError> {
        Ok(LabeledSample {
            features: probe::extract_features(&self.gaps_us, min_window)?,
            true_bin: bin_of(self.usage, edges),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub n_bins: usize,
    pub bin_edges: Vec<f64>,
    pub holdout_accuracy: f64,
    /// Calibration samples, zero when the model was supplied.
    pub calibration_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub end_us: u64,
    pub iterations: u64,
    pub aggregate: AggregateReport,
    pub probe: Option<ProbeSummary>,
    pub records: Vec<MetricsRecord>,
    pub config: SimConfig,
    #[serde(skip)]
    pub events: EventLog,
    #[serde(skip)]
    pub windows: Vec<LabeledWindow>,
}

#[derive(Debug, Clone, Default)]
struct Track {
    gaps: Vec<u64>,
    usages: Vec<f64>,
    since_decision: u32,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    t_us: u64,
    class: TenantClass,
    tenant: TenantId,
    client: Option<u32>,
    tier: Option<Tier>,
    prompt_len: u32,
    output_len: u32,
}

impl From<Spawn> for Pending {
    fn from(s: Spawn) -> Self {
        Self {
            t_us: s.t_us,
            class: s.class,
            tenant: s.tenant,
            client: s.client,
            tier: None,
            prompt_len: s.prompt_len,
            output_len: s.output_len,
        }
    }
}

fn pending_from_dispatch(t_us: u64, d: &Dispatch) -> Pending {
    Pending {
        t_us,
        class: d.class,
        tenant: TenantId::ATTACKER,
        client: None,
        tier: Some(d.tier),
        prompt_len: d.prompt_len,
        output_len: d.output_len,
    }
}

/// Extra context for an attacker dispatch event.
#[derive(Debug, Clone, Copy)]
struct Decision {
    estimate: f64,
    delta: f64,
    regime: crate::attacker::Regime,
}

pub struct Simulation {
    cfg: SimConfig,
    clock: SimClock,
    sched: Scheduler,
    latency: LatencyModel,
    workload: WorkloadGenerator,
    attacker: Option<Attacker>,
    model: Option<ProbeModel>,
    probe_summary: Option<ProbeSummary>,
    log: EventLog,
    collector: Collector,
    records: Vec<MetricsRecord>,
    next_id: u64,
    tracks: BTreeMap<RequestId, Track>,
    /// Calibration: benign closed-loop clients below this index are tapped.
    tap_clients: u32,
    windows: Vec<LabeledWindow>,
    horizon_end: u64,
}

impl Simulation {
    pub fn new(cfg: SimConfig, inputs: RunInputs) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let seed = StreamSeed::new(cfg.seed);
        let workload = WorkloadGenerator::new(&cfg.workload, &seed, cfg.horizon_us, inputs.trace_rows)?;
        let latency = LatencyModel::new(cfg.latency.clone(), seed.stream("latency"));
        let sched = Scheduler::new(cfg.scheduler.clone(), cfg.kv.clone());

        let mut model = None;
        let mut probe_summary = None;
        let attacker = match cfg.attacker.strategy {
            Strategy::None => None,
            _ => {
                if cfg.attacker.strategy == Strategy::FillSqueeze {
                    let (m, samples) = match inputs.probe_model {
                        Some(m) => {
                            m.validate()?;
                            (m, 0)
                        }
                        None => {
                            let out = attacker_probe(&cfg)?;
                            (out.model, out.n_train + out.n_test)
                        }
                    };
                    probe_summary = Some(ProbeSummary {
                        n_bins: m.n_bins,
                        bin_edges: m.bin_edges.clone(),
                        holdout_accuracy: m.holdout_accuracy,
                        calibration_samples: samples,
                    });
                    model = Some(m);
                }
                let t_wait = 2 * libm::round(cfg.expected_iteration_us(cfg.attacker.c_sat)) as u64;
                Some(Attacker::with_capacity(
                    cfg.attacker.clone(),
                    seed.stream("attacker"),
                    cfg.workload.n_clients,
                    cfg.workload.aggregate_rate_per_s(),
                    t_wait,
                    cfg.kv.capacity_tokens(),
                ))
            }
        };

        let mut sim = Self {
            collector: Collector::new(cfg.attacker.c_sat),
            horizon_end: if cfg.drain {
                cfg.horizon_us.saturating_mul(10)
            } else {
                cfg.horizon_us
            },
            cfg,
            clock: SimClock::default(),
            sched,
            latency,
            workload,
            attacker,
            model,
            probe_summary,
            log: EventLog::new(),
            records: Vec::new(),
            next_id: 1,
            tracks: BTreeMap::new(),
            tap_clients: 0,
            windows: Vec::new(),
        };
        sim.tap_clients = sim.cfg.trace.label_clients;
        sim.inject_until(0, 0);
        sim.attacker_tick(0, None);
        Ok(sim)
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.sched
    }

    pub fn events(&self) -> &EventLog {
        &self.log
    }

    pub fn attacker(&self) -> Option<&Attacker> {
        self.attacker.as_ref()
    }

    fn submit(&mut self, p: Pending) -> Option<RequestId> {
        let id = RequestId(self.next_id);
        self.next_id += 1;
        let mut r = Request::new(id, p.class, p.tenant, p.t_us, p.prompt_len, p.output_len);
        r.client = p.client;
        r.tier = p.tier;
        self.log.push(
            p.t_us,
            Some(id),
            EventBody::Arrival {
                class: p.class,
                prompt_len: p.prompt_len,
                output_len: p.output_len,
            },
        );
        self.collector.arrival(id, p.class, p.t_us);
        match self.sched.submit(r) {
            Ok(()) => {
                if p.client.is_some_and(|c| c < self.tap_clients) {
                    self.tracks.insert(id, Track::default());
                }
                Some(id)
            }
            Err(e) => {
                self.log.push(
                    p.t_us,
                    Some(id),
                    EventBody::Rejected {
                        class: p.class,
                        reason: e.to_string(),
                    },
                );
                self.collector.rejected(id);
                if let Some(c) = p.client {
                    // a refused closed-loop client retries a second later
                    self.workload.on_complete(c, p.t_us + 1_000_000);
                }
                None
            }
        }
    }

    fn submit_attack(&mut self, t_us: u64, d: Dispatch, decision: Option<Decision>) {
        let Some(id) = self.submit(pending_from_dispatch(t_us, &d)) else {
            if let Some(a) = self.attacker.as_mut() {
                a.on_rejected();
            }
            return;
        };
        let a = self.attacker.as_mut().expect("attacker dispatch");
        a.on_submitted(id, &d);
        if d.class == TenantClass::Probe {
            self.tracks.insert(id, Track::default());
            self.log.push(
                t_us,
                Some(id),
                EventBody::ProbeDispatched {
                    prompt_len: d.prompt_len,
                },
            );
        } else {
            self.log.push(
                t_us,
                Some(id),
                EventBody::AttackDispatched {
                    tier: d.tier,
                    prompt_len: d.prompt_len,
                    estimate: decision.map(|x| x.estimate),
                    delta_mem: decision.map(|x| x.delta),
                    regime: decision.map(|x| x.regime),
                },
            );
        }
    }

    /// Benign arrivals and fixed-interval payloads in `(t0, t1]`, in time order.
    fn inject_until(&mut self, t0: u64, t1: u64) {
        let mut batch: Vec<Pending> = self.workload.pop_until(t1).into_iter().map(Pending::from).collect();
        if t1 <= self.cfg.horizon_us {
            if let Some(a) = self.attacker.as_mut() {
                batch.extend(a.due_fixed(t0, t1).iter().map(|(t, d)| pending_from_dispatch(*t, d)));
            }
        }
        // stable: benign first on equal timestamps
        batch.sort_by_key(|p| p.t_us);
        for p in batch {
            if p.class == TenantClass::Benign {
                self.submit(p);
            } else {
                let d = Dispatch {
                    class: p.class,
                    tier: p.tier.expect("attack payloads carry a tier"),
                    prompt_len: p.prompt_len,
                    output_len: p.output_len,
                };
                self.submit_attack(p.t_us, d, None);
            }
        }
    }

    /// Attacker reaction at `now` after an iteration that observed `gap`.
    fn attacker_tick(&mut self, now: u64, probe_gap_ready: Option<RequestId>) {
        if now > self.cfg.horizon_us {
            return;
        }
        let Some(a) = self.attacker.as_mut() else { return };
        let window = self.cfg.probe.window as usize;
        let mut to_send: Vec<(Dispatch, Option<Decision>)> = Vec::new();
        if let (Some(id), Some(model)) = (probe_gap_ready, self.model.as_ref()) {
            let stride = self.cfg.probe.stride;
            if let Some(t) = self.tracks.get_mut(&id) {
                if t.gaps.len() >= window && t.since_decision >= stride && !a.controller.sleeping(now) {
                    t.since_decision = 0;
                    let est = model
                        .predict(&t.gaps[t.gaps.len() - window..])
                        .expect("full window")
                        .usage_estimate;
                    let (action, d) = a.decide(est, now);
                    let decision = Decision {
                        estimate: est,
                        delta: a.controller.delta_mem,
                        regime: a.controller.regime,
                    };
                    if let Action::Sleep { until_us } = action {
                        self.log.push(
                            now,
                            None,
                            EventBody::BackOff {
                                estimate: est,
                                delta_mem: decision.delta,
                                until_us,
                            },
                        );
                    }
                    if let Some(d) = d {
                        to_send.push((d, Some(decision)));
                    }
                }
            }
        }
        let a = self.attacker.as_mut().expect("checked above");
        to_send.extend(a.continuous_due(now).into_iter().map(|d| (d, None)));
        if let Some(p) = a.probe_due(now) {
            to_send.push((p, None));
        }
        for (d, decision) in to_send {
            self.submit_attack(now, d, decision);
        }
    }

    pub fn is_done(&self) -> bool {
        if self.clock.now_us >= self.horizon_end {
            return true;
        }
        if self.clock.now_us < self.cfg.horizon_us {
            return false;
        }
        !self.cfg.drain || (self.sched.is_empty() && self.workload.is_exhausted())
    }

    /// One scheduler iteration, or one idle tick.
    pub fn step_once(&mut self) -> StepSummary {
        let t0 = self.clock.now_us;
        let out = self.sched.step();
        self.clock.iteration_index += 1;

        if out.is_idle() {
            let t1 = t0 + self.cfg.idle_tick_us;
            self.collector.idle();
            self.inject_until(t0, t1);
            self.clock.now_us = t1;
            self.attacker_tick(t1, None);
            return StepSummary {
                t_start_us: t0,
                t_end_us: t1,
                idle: true,
                ..StepSummary::default()
            };
        }

        for a in &out.admitted {
            let body = if a.resumed {
                EventBody::Resume {
                    seq: a.seq,
                    prefill_tokens: a.prefill_tokens,
                    swapped_in_blocks: a.swapped_in_blocks,
                }
            } else {
                EventBody::Admission {
                    seq: a.seq,
                    prefill_tokens: a.prefill_tokens,
                }
            };
            self.log.push(t0, Some(a.id), body);
        }
        for p in &out.preempted {
            let generated = self.sched.request(p.victim).map_or(0, |r| r.generated_len);
            self.log.push(
                t0,
                Some(p.victim),
                EventBody::Preemption {
                    class: p.victim_class,
                    victim_seq: p.victim_seq,
                    requester: p.requester,
                    mode: p.cost.mode,
                    blocks: p.cost.blocks,
                    generated,
                },
            );
            self.collector.preempted(p.victim_class);
            if p.victim_class.is_adversarial() {
                if let Some(a) = self.attacker.as_mut() {
                    a.on_preempted();
                }
            }
            if let Some(t) = self.tracks.get_mut(&p.victim) {
                // the window restarts after an eviction
                t.gaps.clear();
                t.usages.clear();
            }
        }

        let bs = self.cfg.kv.block_size;
        let load = BatchLoad::new(
            self.sched.batch_context_tokens(&out),
            out.prefill_tokens(),
            self.cfg
                .latency
                .swap_bytes(out.swap_in_blocks + out.swap_out_blocks, bs),
        );
        let duration = self.latency.iteration_duration(&load);
        let gap = itl_for_iteration(duration);
        let t1 = t0 + duration;
        let used = self.sched.pool().used_fraction();
        let blocked = out.blocked_head.is_some();

        self.inject_until(t0, t1);

        let committed = self.sched.commit(&out, t1, gap);
        let class_of = |s: &Scheduler, id: RequestId, fin: &[Request]| -> TenantClass {
            s.request(id)
                .map(|r| r.tenant_class)
                .or_else(|| fin.iter().find(|r| r.id == id).map(|r| r.tenant_class))
                .expect("emitting request is known")
        };
        let mut probe_ready = None;
        for id in &committed.emitted {
            let class = class_of(&self.sched, *id, &committed.finished);
            let first = committed.first_tokens.contains(id);
            if first {
                self.log.push(t1, Some(*id), EventBody::FirstToken {});
                self.collector.first_token(*id, t1);
            }
            if self.cfg.trace.token_events {
                let n = self
                    .sched
                    .request(*id)
                    .or_else(|| committed.finished.iter().find(|r| r.id == *id))
                    .map_or(0, |r| r.generated_len);
                self.log.push(t1, Some(*id), EventBody::TokenEmitted { n, gap_us: gap });
            }
            if class.is_adversarial() {
                if let Some(a) = self.attacker.as_mut() {
                    let prompt = self
                        .sched
                        .request(*id)
                        .or_else(|| committed.finished.iter().find(|r| r.id == *id))
                        .map_or(0, |r| r.prompt_len);
                    a.on_token(*id, class, first.then_some(prompt));
                }
            }
            if !first {
                if let Some(t) = self.tracks.get_mut(id) {
                    t.gaps.push(gap);
                    t.usages.push(used);
                    t.since_decision += 1;
                    if class == TenantClass::Probe {
                        probe_ready = Some(*id);
                    }
                }
            }
        }
        self.harvest_windows();

        let n_finished = committed.finished.len() as u32;
        for r in committed.finished {
            self.log.push(
                t1,
                Some(r.id),
                EventBody::Finish {
                    class: r.tenant_class,
                    n_output: r.generated_len,
                    preempt_count: r.preempt_count,
                },
            );
            self.collector.finished(r.id, t1, r.generated_len);
            if r.tenant_class.is_adversarial() {
                if let Some(a) = self.attacker.as_mut() {
                    a.on_finished(r.id, r.tenant_class);
                }
            }
            if let (Some(c), TenantClass::Benign) = (r.client, r.tenant_class) {
                self.workload.on_complete(c, t1);
            }
            if r.tenant_class != TenantClass::Probe {
                self.tracks.remove(&r.id);
            }
            self.records.push(metrics::record(&r));
        }

        let depths = self.sched.queue_depths();
        self.log.push(
            t1,
            None,
            EventBody::KvSample {
                used_fraction: used,
                duration_us: duration,
                waiting: depths.waiting as u32,
                running: depths.running as u32,
                blocked,
                emitted: committed.emitted.len() as u32,
            },
        );
        self.collector.iteration(used, duration, blocked);
        self.clock.now_us = t1;

        // closed-loop clients that completed at t1 re-enter now
        self.inject_until(t1, t1);
        self.attacker_tick(t1, probe_ready);
        // a finished probe's track is only needed for its last decision
        self.tracks.retain(|id, _| self.sched.request(*id).is_some());

        StepSummary {
            t_start_us: t0,
            t_end_us: t1,
            idle: false,
            used_fraction: used,
            admitted: out.admitted.len() as u32,
            preempted: out.preempted.len() as u32,
            emitted: committed.emitted.len() as u32,
            finished: n_finished,
            blocked,
        }
    }

    /// Calibration mode: turns tapped tracks into labeled windows.
    fn harvest_windows(&mut self) {
        if self.tap_clients == 0 {
            return;
        }
        let window = self.cfg.probe.window as usize;
        let stride = self.cfg.probe.stride;
        for t in self.tracks.values_mut() {
            if t.gaps.len() >= window && t.since_decision >= stride {
                t.since_decision = 0;
                let start = t.gaps.len() - window;
                self.windows.push(LabeledWindow {
                    gaps_us: t.gaps[start..].to_vec(),
                    usage: t.usages[start + window / 2],
                });
            }
        }
    }

    /// Runs to the end and assembles the report.
    pub fn run_to_end(mut self) -> RunReport {
        while !self.is_done() {
            self.step_once();
        }
        self.finish()
    }

    pub fn finish(mut self) -> RunReport {
        let end = self.clock.now_us;
        self.log.push(
            end,
            None,
            EventBody::RunEnd {
                iterations: self.clock.iteration_index,
            },
        );
        let attack: Option<AttackSummary> = self.attacker.as_ref().map(|a| a.summary());
        let aggregate = self.collector.report(end, attack);
        let mut records = self.records;
        records.extend(self.sched.live_requests().map(metrics::record));
        RunReport {
            seed: self.cfg.seed,
            end_us: end,
            iterations: self.clock.iteration_index,
            aggregate,
            probe: self.probe_summary,
            records,
            config: self.cfg,
            events: self.log,
            windows: self.windows,
        }
    }
}

/// Runs `cfg` to completion.
pub fn run(cfg: SimConfig) -> Result<RunReport, ConfigError> {
    run_with(cfg, RunInputs::default())
}

pub fn run_with(cfg: SimConfig, inputs: RunInputs) -> Result<RunReport, ConfigError> {
    Ok(Simulation::new(cfg, inputs)?.run_to_end())
}

/// Closed-loop calibration run at concurrency `c`: the first few clients act as
/// probes and every full window of theirs is labeled with the true usage.
pub fn calibration_config(base: &SimConfig, level_index: usize, c: u32) -> SimConfig {
    let cal = &base.probe.calibration;
    let out_lo = f64::from(cal.output_min);
    let out_hi = f64::from(cal.output_max);
    let mut cfg = base.clone();
    cfg.seed = base.seed.wrapping_add(cal.seed_offset).wrapping_add(level_index as u64);
    cfg.horizon_us = cal.horizon_us;
    cfg.drain = false;
    cfg.attacker = AttackerConfig::default();
    cfg.trace = TraceConfig::default();
    cfg.workload = WorkloadConfig {
        arrival: ArrivalProcess::ClosedLoop {
            concurrency: c,
            think_us: 0,
        },
        length_preset: String::new(),
        lengths: Some(LengthDist {
            prompt: LogNormalSpec {
                median: 150.0,
                sigma: 0.5,
            },
            output: LogNormalSpec {
                median: libm::sqrt(out_lo * out_hi),
                sigma: libm::log(out_hi / out_lo) / 4.0,
            },
        }),
        n_clients: c,
        max_model_len: cal.output_max + 1024,
    };
    cfg
}

/// Labeled windows from one calibration configuration.
pub fn collect_windows(mut cfg: SimConfig, tap_clients: u32) -> Result<Vec<LabeledWindow>, ConfigError> {
    cfg.trace.label_clients = tap_clients;
    Ok(run(cfg)?.windows)
}

/// Labeled samples from every calibration level of `base`.
pub fn calibration_samples(base: &SimConfig, edges: &[f64]) -> Result<Vec<LabeledSample>, ConfigError> {
    let mut samples = Vec::new();
    for (i, c) in base
        .probe
        .calibration
        .levels_for(base.kv.capacity_tokens())
        .iter()
        .enumerate()
    {
        let cfg = calibration_config(base, i, *c);
        let tap = base.probe.calibration.probes_in_flight.min(*c);
        for w in collect_windows(cfg, tap)? {
            samples.push(w.labeled(edges, base.probe.min_window as usize)?);
        }
    }
    Ok(samples)
}

/// The probe a Fill and Squeeze attacker trains before attacking under
/// `cfg`. Runs that share a pool, latency model and seed can reuse it
/// through `RunInputs::probe_model`.
pub fn attacker_probe(cfg: &SimConfig) -> Result<probe::TrainOutcome, ConfigError> {
    let edges = cfg
        .probe
        .attacker_edges
        .edges(cfg.probe.n_bins as usize, cfg.attacker.c_sat);
    let samples = calibration_samples(cfg, &edges)?;
    Ok(probe::train(
        &samples,
        &edges,
        cfg.probe.min_window as usize,
        &cfg.probe.hyper,
    )?)
}

/// Edges for standalone probe training under `cfg`.
pub fn training_edges(cfg: &SimConfig) -> Vec<f64> {
    cfg.probe.edges.edges(cfg.probe.n_bins as usize, cfg.attacker.c_sat)
}

impl BinEdges {
    /// Convenience for the attacker's default split.
    pub fn saturation() -> Self {
        BinEdges::SaturationSplit { c_sat: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SimConfig {
        SimConfig {
            horizon_us: 5_000_000,
            workload: WorkloadConfig {
                arrival: ArrivalProcess::None,
                ..WorkloadConfig::default()
            },
            ..SimConfig::default()
        }
    }

    #[test]
    fn empty_workload() {
        let r = run(quiet()).unwrap();
        assert_eq!(r.aggregate.total_preemptions, 0);
        assert_eq!(r.records.len(), 0);
        assert_eq!(r.aggregate.benign().submitted, 0);
        // idle ticks only
        assert_eq!(r.iterations, 5_000_000 / 100);
        assert_eq!(r.events.len(), 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SimConfig {
            horizon_us: 0,
            ..quiet()
        };
        assert!(matches!(run(cfg), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn single_request_step() {
        let mut sim = Simulation::new(quiet(), RunInputs::default()).unwrap();
        sim.submit(Pending {
            t_us: 0,
            class: TenantClass::Benign,
            tenant: TenantId(0),
            client: None,
            tier: None,
            prompt_len: 10,
            output_len: 5,
        });
        let first = sim.step_once();
        assert_eq!(first.emitted, 1);
        let before = sim.sched.request(RequestId(1)).unwrap().generated_len;
        let s = sim.step_once();
        let r = sim.sched.request(RequestId(1)).unwrap();
        assert_eq!(r.generated_len, before + 1);
        assert_eq!(r.itl_trace.last().unwrap().gap_us, s.t_end_us - s.t_start_us);
    }

    #[test]
    fn idle_step_advances_by_tick_without_events() {
        let mut sim = Simulation::new(quiet(), RunInputs::default()).unwrap();
        let s = sim.step_once();
        assert!(s.idle);
        assert_eq!(s.t_end_us, 100);
        assert!(sim.events().is_empty());
    }

    #[test]
    fn batch_shares_gap() {
        let mut sim = Simulation::new(quiet(), RunInputs::default()).unwrap();
        for _ in 0..4 {
            sim.submit(Pending {
                t_us: 0,
                class: TenantClass::Benign,
                tenant: TenantId(0),
                client: None,
                tier: None,
                prompt_len: 20,
                output_len: 50,
            });
        }
        sim.step_once();
        let s = sim.step_once();
        let gaps: Vec<u64> = sim
            .sched
            .live_requests()
            .map(|r| r.itl_trace.last().unwrap().gap_us)
            .collect();
        assert_eq!(gaps.len(), 4);
        assert!(gaps.iter().all(|g| *g == s.t_end_us - s.t_start_us));
    }
}
