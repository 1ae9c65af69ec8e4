//! Adversarial tenants.
//!
//! Payloads are length specifications drawn from a three-tier arsenal. The
//! closed-loop strategy reads a KV-usage estimate from its probe, computes the
//! gap to the saturation threshold and picks a tier (or sleeps); the fixed
//! interval baselines ignore system state entirely. Every token the attacker
//! sends or receives, probes included, is billed to a [`CostLedger`].

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::request::{Request, RequestId, TenantClass};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    High,
    Mid,
    Low,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::High, Tier::Mid, Tier::Low];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::High => "high",
            Tier::Mid => "mid",
            Tier::Low => "low",
        }
    }

    fn index(&self) -> usize {
        match self {
            Tier::High => 0,
            Tier::Mid => 1,
            Tier::Low => 2,
        }
    }
}

/// Inclusive integer range sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthRange {
    pub min: u32,
    pub max: u32,
}

impl LengthRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> u32 {
        rng.random_range(self.min..=self.max)
    }

    pub fn mean(&self) -> f64 {
        (f64::from(self.min) + f64::from(self.max)) / 2.0
    }

    fn valid(&self) -> bool {
        self.min >= 1 && self.min <= self.max
    }
}

/// Input and output length profile of one kind of payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSpec {
    pub input: LengthRange,
    pub output: LengthRange,
}

impl PayloadSpec {
    pub const fn new(input: LengthRange, output: LengthRange) -> Self {
        Self { input, output }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> (u32, u32) {
        (self.input.sample(rng), self.output.sample(rng))
    }

    /// E(p): blocks a request of this profile is expected to occupy at the end
    /// of its life, from the expected output length.
    pub fn expected_blocks(&self, block_size: u32) -> u32 {
        libm::ceil(self.output.mean() / f64::from(block_size)) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Arsenal {
    /// Near the model's output limit.
    pub high: PayloadSpec,
    pub mid: PayloadSpec,
    /// Also used for probes.
    pub low: PayloadSpec,
}

impl Default for Arsenal {
    fn default() -> Self {
        Self {
            high: PayloadSpec::new(LengthRange::new(100, 140), LengthRange::new(7168, 8000)),
            mid: PayloadSpec::new(LengthRange::new(60, 120), LengthRange::new(1000, 2000)),
            low: PayloadSpec::new(LengthRange::new(40, 80), LengthRange::new(400, 600)),
        }
    }
}

impl Arsenal {
    pub fn spec(&self, tier: Tier) -> &PayloadSpec {
        match tier {
            Tier::High => &self.high,
            Tier::Mid => &self.mid,
            Tier::Low => &self.low,
        }
    }

    fn validate(&self) -> Result<(), &'static str> {
        for t in Tier::ALL {
            let s = self.spec(t);
            if !s.input.valid() || !s.output.valid() {
                return Err("attacker.arsenal ranges need 1 <= min <= max");
            }
        }
        Ok(())
    }
}

/// Payload collections for the scheduler-oblivious baselines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePool {
    /// Optimised suffixes that suppress EOS: moderate inputs, long outputs.
    EngorgioLike,
    /// Short triggers that loop until the length limit.
    LoopllmLike,
    /// Long obfuscated prompts with long reasoning traces.
    ExtendattackLike,
    /// Plain requests that just ramble for a while.
    Babbling,
    Custom(Vec<PayloadSpec>),
}

impl BaselinePool {
    pub fn payloads(&self) -> Vec<PayloadSpec> {
        use LengthRange as R;
        match self {
            BaselinePool::EngorgioLike => alloc::vec![
                PayloadSpec::new(R::new(200, 320), R::new(4000, 8000)),
                PayloadSpec::new(R::new(150, 250), R::new(3000, 6000)),
            ],
            BaselinePool::LoopllmLike => alloc::vec![PayloadSpec::new(R::new(40, 120), R::new(6000, 8000))],
            BaselinePool::ExtendattackLike => alloc::vec![
                PayloadSpec::new(R::new(600, 1200), R::new(2000, 6000)),
                PayloadSpec::new(R::new(400, 800), R::new(1500, 4000)),
            ],
            BaselinePool::Babbling => alloc::vec![PayloadSpec::new(R::new(30, 90), R::new(1000, 3000))],
            BaselinePool::Custom(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Strategy {
    None,
    /// Closed-loop fill / squeeze / back-off driven by the probe.
    FillSqueeze,
    /// One payload from `pool` every `period_us`. Without a period, the
    /// malicious ratio and the benign arrival rate decide it.
    FixedInterval {
        #[serde(default)]
        period_us: Option<u64>,
        pool: BaselinePool,
    },
    /// Keeps `concurrency_quota` High-tier payloads outstanding at all times.
    ContinuousHigh,
    /// Probes only; no payloads.
    ProbeOnly,
}

impl Strategy {
    pub fn uses_probe(&self) -> bool {
        matches!(self, Strategy::FillSqueeze | Strategy::ProbeOnly)
    }
}

/// Unit prices in cents per million tokens, so that every charge is an exact
/// integer number of 1e-8 USD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prices {
    pub input_cents_per_mtok: u64,
    pub output_cents_per_mtok: u64,
}

impl Default for Prices {
    /// GPT-4o mini list prices: $0.15 / $0.60 per million tokens.
    fn default() -> Self {
        Self {
            input_cents_per_mtok: 15,
            output_cents_per_mtok: 60,
        }
    }
}

/// Money in units of 1e-8 USD.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Usd(pub u64);

impl Usd {
    pub const UNITS_PER_DOLLAR: u64 = 100_000_000;

    pub fn as_f64(&self) -> f64 {
        self.0 as f64 / Self::UNITS_PER_DOLLAR as f64
    }
}

impl core::ops::Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "${}.{:08}",
            self.0 / Self::UNITS_PER_DOLLAR,
            self.0 % Self::UNITS_PER_DOLLAR
        )
    }
}

/// How an attack payload was obtained and billed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostParadigm {
    /// Optimisation on a local surrogate: energy only.
    WhiteBox {
        t_opt_s: u64,
        p_avg_w: u64,
        /// Electricity price, micro-USD per kWh.
        p_e_micro_usd_per_kwh: u64,
    },
    /// Iterative querying of the target API.
    BlackBox {
        iterations: Vec<(u64, u64)>,
    },
    PlainText {
        h_in: u64,
        h_out: u64,
    },
}

/// Cost of crafting or sending a payload.
pub fn cost_of(paradigm: &CostParadigm, prices: &Prices) -> Usd {
    let tokens = |h_in: u64, h_out: u64| h_in * prices.input_cents_per_mtok + h_out * prices.output_cents_per_mtok;
    match paradigm {
        // s * W = J; J / 3.6e6 = kWh; * micro-USD / 1e6 = USD; * 1e8 = units
        CostParadigm::WhiteBox {
            t_opt_s,
            p_avg_w,
            p_e_micro_usd_per_kwh,
        } => Usd(t_opt_s * p_avg_w * p_e_micro_usd_per_kwh / 36_000),
        CostParadigm::BlackBox { iterations } => Usd(iterations.iter().map(|(i, o)| tokens(*i, *o)).sum()),
        CostParadigm::PlainText { h_in, h_out } => Usd(tokens(*h_in, *h_out)),
    }
}

/// Running bill of the attacker.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub probe_input_tokens: u64,
    pub probe_output_tokens: u64,
    pub total: Usd,
}

impl CostLedger {
    pub fn charge_input(&mut self, tokens: u64, probe: bool, prices: &Prices) {
        if probe {
            self.probe_input_tokens += tokens;
        } else {
            self.input_tokens += tokens;
        }
        self.total.0 += tokens * prices.input_cents_per_mtok;
    }

    pub fn charge_output(&mut self, tokens: u64, probe: bool, prices: &Prices) {
        if probe {
            self.probe_output_tokens += tokens;
        } else {
            self.output_tokens += tokens;
        }
        self.total.0 += tokens * prices.output_cents_per_mtok;
    }

    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens + self.probe_input_tokens + self.probe_output_tokens
    }

    /// The bill recomputed from the token counters.
    pub fn recompute(&self, prices: &Prices) -> Usd {
        cost_of(
            &CostParadigm::PlainText {
                h_in: self.input_tokens + self.probe_input_tokens,
                h_out: self.output_tokens + self.probe_output_tokens,
            },
            prices,
        )
    }
}

/// Output tokens per prompt token.
pub fn expansion_ratio(req: &Request) -> f64 {
    f64::from(req.generated_len) / f64::from(req.prompt_len.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackerConfig {
    pub strategy: Strategy,
    /// Saturation threshold on KV usage.
    pub c_sat: f64,
    pub delta_large: f64,
    pub delta_small: f64,
    /// Sleep after an overload estimate. `None`: two iterations at saturation.
    pub t_wait_us: Option<u64>,
    /// Disable to keep squeezing through overload.
    pub backoff: bool,
    /// Outstanding payloads allowed. `None`: derived from `malicious_ratio`.
    pub concurrency_quota: Option<u32>,
    /// Attacker share of clients, used to size quota and fixed-interval period.
    pub malicious_ratio: f64,
    /// Stop dispatching once this many tokens (in + out, probes included) are billed.
    pub token_budget: Option<u64>,
    /// Credit in-flight payloads with this many tokens of not-yet-visible
    /// growth each when computing the gap. `None`: use the raw estimate.
    pub expansion_lookahead_tokens: Option<u32>,
    pub start_us: u64,
    pub arsenal: Arsenal,
    pub prices: Prices,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            c_sat: 0.975,
            delta_large: 0.30,
            delta_small: 0.05,
            t_wait_us: None,
            backoff: true,
            concurrency_quota: None,
            malicious_ratio: 0.5,
            token_budget: None,
            expansion_lookahead_tokens: None,
            start_us: 0,
            arsenal: Arsenal::default(),
            prices: Prices::default(),
        }
    }
}

impl AttackerConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.c_sat > 0.5 && self.c_sat <= 1.0) {
            return Err("attacker.c_sat must be in (0.5, 1.0]");
        }
        if !(self.delta_small > 0.0 && self.delta_small <= self.delta_large && self.delta_large < 1.0) {
            return Err("attacker thresholds need 0 < delta_small <= delta_large < 1");
        }
        if !(self.malicious_ratio > 0.0 && self.malicious_ratio < 1.0) {
            return Err("attacker.malicious_ratio must be in (0, 1)");
        }
        if self.concurrency_quota == Some(0) {
            return Err("attacker.concurrency_quota must be >= 1");
        }
        if let Strategy::FixedInterval { period_us, pool } = &self.strategy {
            if *period_us == Some(0) {
                return Err("attacker.strategy.period_us must be >= 1");
            }
            let payloads = pool.payloads();
            if payloads.is_empty() || payloads.iter().any(|p| !p.input.valid() || !p.output.valid()) {
                return Err("attacker.strategy.pool must hold valid payloads");
            }
        }
        self.arsenal.validate()
    }

    /// Payload concurrency for `n_clients` benign clients.
    pub fn quota(&self, n_clients: u32) -> u32 {
        self.concurrency_quota.unwrap_or_else(|| {
            let m = self.malicious_ratio;
            (libm::round(f64::from(n_clients) * m / (1.0 - m)) as u32).max(1)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Fill,
    /// Between the two thresholds: Mid-tier payloads hold the pressure.
    Buffer,
    Squeeze,
    BackOff,
}

/// Regime for a memory gap `delta = c_sat - estimate`.
pub fn classify(delta: f64, delta_large: f64, delta_small: f64) -> Regime {
    if delta > delta_large {
        Regime::Fill
    } else if delta <= 0.0 {
        Regime::BackOff
    } else if delta <= delta_small {
        Regime::Squeeze
    } else {
        Regime::Buffer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Dispatch(Tier),
    Sleep {
        until_us: u64,
    },
    /// Quota or budget exhausted.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub last_estimate: Option<f64>,
    /// Expected growth of in-flight payloads as a usage fraction.
    pub expected_expansion: f64,
    pub delta_mem: f64,
    pub regime: Regime,
    pub sleep_until_us: u64,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            last_estimate: None,
            expected_expansion: 0.0,
            delta_mem: 1.0,
            regime: Regime::Fill,
            sleep_until_us: 0,
        }
    }
}

impl ControllerState {
    pub fn sleeping(&self, now_us: u64) -> bool {
        now_us < self.sleep_until_us
    }

    /// One pass of the control loop for a fresh estimate. `expansion` is the
    /// memory the attacker's own in-flight payloads are still expected to
    /// claim, so the gap closes as soon as enough has been committed.
    pub fn step(
        &mut self,
        cfg: &AttackerConfig,
        estimate: f64,
        expansion: f64,
        now_us: u64,
        t_wait_us: u64,
        can_dispatch: bool,
    ) -> Action {
        self.last_estimate = Some(estimate);
        self.expected_expansion = expansion;
        self.delta_mem = cfg.c_sat - (estimate + expansion);
        self.regime = classify(self.delta_mem, cfg.delta_large, cfg.delta_small);
        let tier = match self.regime {
            Regime::Fill => Tier::High,
            Regime::Buffer => Tier::Mid,
            Regime::Squeeze => Tier::Low,
            Regime::BackOff if cfg.backoff => {
                self.sleep_until_us = now_us + t_wait_us;
                return Action::Sleep {
                    until_us: self.sleep_until_us,
                };
            }
            Regime::BackOff => Tier::Low,
        };
        if can_dispatch {
            Action::Dispatch(tier)
        } else {
            Action::Hold
        }
    }
}

/// A payload or probe the attacker wants submitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dispatch {
    pub class: TenantClass,
    pub tier: Tier,
    pub prompt_len: u32,
    pub output_len: u32,
}

/// Counters reported at the end of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub strategy: alloc::string::String,
    /// Payloads submitted per tier: high, mid, low.
    pub dispatched: [u64; 3],
    pub probes: u64,
    pub rejected: u64,
    pub sleeps: u64,
    pub decisions: u64,
    pub self_preemptions: u64,
    pub ledger: CostLedger,
    pub cost_usd: f64,
}

impl AttackSummary {
    pub fn payloads(&self) -> u64 {
        self.dispatched.iter().sum()
    }
}

/// Live attacker: dispatch pacing, controller, probe window and ledger.
#[derive(Debug, Clone)]
pub struct Attacker {
    cfg: AttackerConfig,
    rng: StreamRng,
    pool: Vec<PayloadSpec>,
    period_us: Option<u64>,
    next_fixed_us: u64,
    t_wait_us: u64,
    quota: u32,
    outstanding: u32,
    probe_in_flight: bool,
    /// Pool size in tokens as known from calibration, 0 when unknown.
    capacity_tokens: u64,
    /// Expected final size and tokens seen so far, per in-flight payload.
    inflight: BTreeMap<RequestId, (u64, u64)>,
    pub controller: ControllerState,
    summary: AttackSummary,
}

impl Attacker {
    /// `benign_rate_per_s` is the aggregate benign arrival rate, used when a
    /// fixed-interval period has to be derived from the malicious ratio.
    pub fn new(
        cfg: AttackerConfig,
        rng: StreamRng,
        n_clients: u32,
        benign_rate_per_s: f64,
        default_t_wait_us: u64,
    ) -> Self {
        Self::with_capacity(cfg, rng, n_clients, benign_rate_per_s, default_t_wait_us, 0)
    }

    /// As [`Attacker::new`], with the pool size the controller uses to turn
    /// expected payload growth into a usage fraction.
    pub fn with_capacity(
        cfg: AttackerConfig,
        rng: StreamRng,
        n_clients: u32,
        benign_rate_per_s: f64,
        default_t_wait_us: u64,
        capacity_tokens: u64,
    ) -> Self {
        let (pool, period_us) = match &cfg.strategy {
            Strategy::FixedInterval { period_us, pool } => {
                let period = period_us.unwrap_or_else(|| {
                    let m = cfg.malicious_ratio;
                    let rate = benign_rate_per_s * m / (1.0 - m);
                    if rate > 0.0 {
                        (libm::round(1e6 / rate) as u64).max(1)
                    } else {
                        u64::MAX
                    }
                });
                (pool.payloads(), Some(period))
            }
            _ => (Vec::new(), None),
        };
        let strategy = match cfg.strategy {
            Strategy::None => "none",
            Strategy::FillSqueeze => "fill-squeeze",
            Strategy::FixedInterval { .. } => "fixed-interval",
            Strategy::ContinuousHigh => "continuous-high",
            Strategy::ProbeOnly => "probe-only",
        };
        Self {
            quota: cfg.quota(n_clients),
            t_wait_us: cfg.t_wait_us.unwrap_or(default_t_wait_us),
            next_fixed_us: cfg.start_us.saturating_add(period_us.unwrap_or(0)),
            cfg,
            rng,
            pool,
            period_us,
            outstanding: 0,
            probe_in_flight: false,
            capacity_tokens,
            inflight: BTreeMap::new(),
            controller: ControllerState::default(),
            summary: AttackSummary {
                strategy: strategy.into(),
                ..AttackSummary::default()
            },
        }
    }

    pub fn config(&self) -> &AttackerConfig {
        &self.cfg
    }

    pub fn quota(&self) -> u32 {
        self.quota
    }

    pub fn t_wait_us(&self) -> u64 {
        self.t_wait_us
    }

    pub fn outstanding(&self) -> u32 {
        self.outstanding
    }

    pub fn period_us(&self) -> Option<u64> {
        self.period_us
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.summary.ledger
    }

    fn over_budget(&self) -> bool {
        self.cfg
            .token_budget
            .is_some_and(|b| self.summary.ledger.total_tokens() >= b)
    }

    fn active(&self, now_us: u64) -> bool {
        now_us >= self.cfg.start_us && !self.over_budget()
    }

    pub fn can_dispatch(&self, now_us: u64) -> bool {
        self.active(now_us) && self.outstanding < self.quota
    }

    fn payload(&mut self, tier: Tier) -> Dispatch {
        let (prompt_len, output_len) = self.cfg.arsenal.spec(tier).sample(&mut self.rng);
        Dispatch {
            class: TenantClass::Attacker,
            tier,
            prompt_len,
            output_len,
        }
    }

    /// Fixed-interval dispatches due in `(t0, t1]`, with their timestamps.
    pub fn due_fixed(&mut self, t0: u64, t1: u64) -> Vec<(u64, Dispatch)> {
        let mut due = Vec::new();
        let Some(period) = self.period_us else {
            return due;
        };
        while self.next_fixed_us <= t1 {
            let t = self.next_fixed_us;
            self.next_fixed_us = self.next_fixed_us.saturating_add(period);
            if t <= t0 || !self.active(t) {
                continue;
            }
            let spec = self.pool[self.rng.random_range(0..self.pool.len())];
            let (prompt_len, output_len) = spec.sample(&mut self.rng);
            due.push((
                t,
                Dispatch {
                    class: TenantClass::Attacker,
                    tier: Tier::High,
                    prompt_len,
                    output_len,
                },
            ));
        }
        due
    }

    /// A new probe when the strategy wants one and none is in flight.
    pub fn probe_due(&mut self, now_us: u64) -> Option<Dispatch> {
        if !self.cfg.strategy.uses_probe() || self.probe_in_flight || !self.active(now_us) {
            return None;
        }
        let mut d = self.payload(Tier::Low);
        d.class = TenantClass::Probe;
        Some(d)
    }

    /// Refill for the continuous-High baseline.
    pub fn continuous_due(&mut self, now_us: u64) -> Vec<Dispatch> {
        let mut v = Vec::new();
        if self.cfg.strategy == Strategy::ContinuousHigh {
            let mut pending = self.outstanding;
            while pending < self.quota && self.active(now_us) {
                v.push(self.payload(Tier::High));
                pending += 1;
            }
        }
        v
    }

    /// Controller pass on a fresh estimate; returns the action and any payload.
    pub fn decide(&mut self, estimate: f64, now_us: u64) -> (Action, Option<Dispatch>) {
        let can = self.can_dispatch(now_us);
        let expansion = self.expected_expansion();
        let action = self
            .controller
            .step(&self.cfg, estimate, expansion, now_us, self.t_wait_us, can);
        self.summary.decisions += 1;
        match action {
            Action::Dispatch(tier) => (action, Some(self.payload(tier))),
            Action::Sleep { .. } => {
                self.summary.sleeps += 1;
                (action, None)
            }
            Action::Hold => (action, None),
        }
    }

    /// Growth still expected from in-flight payloads, as a usage fraction.
    pub fn expected_expansion(&self) -> f64 {
        let Some(look) = self.cfg.expansion_lookahead_tokens else {
            return 0.0;
        };
        if self.capacity_tokens == 0 {
            return 0.0;
        }
        let pending: u64 = self
            .inflight
            .values()
            .map(|(total, seen)| total.saturating_sub(*seen).min(u64::from(look)))
            .sum();
        pending as f64 / self.capacity_tokens as f64
    }

    /// Bookkeeping once the scheduler accepted a dispatch.
    pub fn on_submitted(&mut self, id: RequestId, d: &Dispatch) {
        let probe = d.class == TenantClass::Probe;
        if !probe {
            let expected = u64::from(d.prompt_len) + libm::round(self.cfg.arsenal.spec(d.tier).output.mean()) as u64;
            self.inflight.insert(id, (expected, 0));
        }
        self.summary
            .ledger
            .charge_input(u64::from(d.prompt_len), probe, &self.cfg.prices);
        if probe {
            self.probe_in_flight = true;
            self.summary.probes += 1;
        } else {
            self.outstanding += 1;
            self.summary.dispatched[d.tier.index()] += 1;
        }
    }

    pub fn on_rejected(&mut self) {
        self.summary.rejected += 1;
    }

    /// `first` carries the prompt length on a request's first token.
    pub fn on_token(&mut self, id: RequestId, class: TenantClass, first: Option<u32>) {
        let probe = class == TenantClass::Probe;
        if let Some((_, seen)) = self.inflight.get_mut(&id) {
            *seen += 1 + first.map_or(0, u64::from);
        }
        self.summary.ledger.charge_output(1, probe, &self.cfg.prices);
    }

    pub fn on_finished(&mut self, id: RequestId, class: TenantClass) {
        self.inflight.remove(&id);
        match class {
            TenantClass::Probe => self.probe_in_flight = false,
            TenantClass::Attacker => self.outstanding -= 1,
            TenantClass::Benign => {}
        }
    }

    pub fn on_preempted(&mut self) {
        self.summary.self_preemptions += 1;
    }

    pub fn summary(&self) -> AttackSummary {
        let mut s = self.summary.clone();
        s.cost_usd = s.ledger.total.as_f64();
        s
    }
}
