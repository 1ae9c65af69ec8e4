//! Iteration-level scheduler.
//!
//! Each step walks the WAITING queue head-first and admits while the block
//! pool can hold the head's prompt; the first failure ends admission for the
//! step even if later requests would fit (memory-based head-of-line blocking).
//! Running requests then receive prefill chunks out of a shared token budget,
//! and every fully-prefilled request appends one token. When an append finds
//! the pool empty the most recently scheduled request is evicted (LIFO),
//! recovered by swap or recompute, and put back at the front of WAITING.
//!
//! A step is split in two halves: [`Scheduler::step`] makes every decision and
//! does the block accounting; [`Scheduler::commit`] runs once the iteration's
//! duration is known, records the emitted tokens and retires finished requests.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{AppendResult, BlockPool, KvConfig};
use crate::request::{ItlEntry, Request, RequestId, RequestState, TenantClass, TenantId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryMode {
    /// Move the victim's blocks to host memory and back.
    Swap,
    /// Drop the victim's KV and prefill prompt + generated tokens again.
    Recompute,
}

/// Per-tenant admission limits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TenantQuota {
    /// Submitted-but-unfinished requests allowed per tenant.
    pub max_outstanding_per_tenant: Option<u32>,
    /// Tenants whose finished traffic averages more output tokens per input
    /// token than this are refused further submissions.
    pub max_expansion_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Prefill tokens processed per iteration (chunked prefill). Decode
    /// tokens do not count against it.
    pub token_budget_per_iter: u32,
    pub recovery_mode: RecoveryMode,
    pub max_running: Option<u32>,
    /// Generation length cap applied to every request.
    pub output_cap: Option<u32>,
    pub tenant_quota: Option<TenantQuota>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            token_budget_per_iter: 512,
            recovery_mode: RecoveryMode::Recompute,
            max_running: None,
            output_cap: None,
            tenant_quota: None,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.token_budget_per_iter == 0 {
            return Err("scheduler.token_budget_per_iter must be >= 1");
        }
        if self.output_cap == Some(0) {
            return Err("scheduler.output_cap must be >= 1");
        }
        if self.max_running == Some(0) {
            return Err("scheduler.max_running must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("request {0} already submitted")]
    DuplicateId(RequestId),
    #[error("tenant {tenant:?} over quota: {reason}")]
    QuotaExceeded { tenant: TenantId, reason: &'static str },
    #[error("request {id} needs {tokens} tokens, pool holds {capacity}")]
    ExceedsCapacity { id: RequestId, tokens: u64, capacity: u64 },
}

/// What a preemption cost the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryCost {
    pub mode: RecoveryMode,
    /// Blocks released by the victim (swap: moved to host and moved back later).
    pub blocks: u32,
    /// Tokens that must be prefilled again on re-admission.
    pub reprefill_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preemption {
    pub victim: RequestId,
    pub victim_class: TenantClass,
    pub victim_seq: u64,
    /// The request whose append could not be granted.
    pub requester: RequestId,
    pub cost: RecoveryCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admission {
    pub id: RequestId,
    pub seq: u64,
    /// True when this re-admits a preempted request.
    pub resumed: bool,
    pub swapped_in_blocks: u32,
    pub prefill_tokens: u32,
}

/// Decisions of one step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScheduleOutput {
    pub admitted: Vec<Admission>,
    pub prefill_chunks: Vec<(RequestId, u32)>,
    /// Requests that emit a token this iteration, in schedule order.
    pub decode_set: Vec<RequestId>,
    pub preempted: Vec<Preemption>,
    /// Head of WAITING when admission stopped on memory.
    pub blocked_head: Option<RequestId>,
    pub swap_in_blocks: u32,
    pub swap_out_blocks: u32,
}

impl ScheduleOutput {
    /// True when the iteration puts no work on the device.
    pub fn is_idle(&self) -> bool {
        self.prefill_chunks.is_empty()
            && self.decode_set.is_empty()
            && self.swap_in_blocks == 0
            && self.swap_out_blocks == 0
    }

    pub fn prefill_tokens(&self) -> u64 {
        self.prefill_chunks.iter().map(|(_, c)| u64::from(*c)).sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CommitOutput {
    pub emitted: Vec<RequestId>,
    pub first_tokens: Vec<RequestId>,
    pub finished: Vec<Request>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueDepths {
    pub waiting: usize,
    pub running: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct TenantStats {
    outstanding: u32,
    prompt_tokens: u64,
    output_tokens: u64,
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SchedulerConfig,
    pool: BlockPool,
    requests: BTreeMap<RequestId, Request>,
    waiting: VecDeque<RequestId>,
    /// Ordered by `schedule_seq`, oldest first.
    running: Vec<RequestId>,
    next_seq: u64,
    tenants: BTreeMap<TenantId, TenantStats>,
    hol_blocked_steps: u64,
    preemptions: u64,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig, kv: KvConfig) -> Self {
        Self {
            config,
            pool: BlockPool::new(kv),
            requests: BTreeMap::new(),
            waiting: VecDeque::new(),
            running: Vec::new(),
            next_seq: 1,
            tenants: BTreeMap::new(),
            hol_blocked_steps: 0,
            preemptions: 0,
        }
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn pool(&self) -> &BlockPool {
        &self.pool
    }

    pub fn request(&self, id: RequestId) -> Option<&Request> {
        self.requests.get(&id)
    }

    /// Requests not yet finished.
    pub fn live_requests(&self) -> impl Iterator<Item = &Request> {
        self.requests.values()
    }

    pub fn waiting(&self) -> &VecDeque<RequestId> {
        &self.waiting
    }

    pub fn running(&self) -> &[RequestId] {
        &self.running
    }

    pub fn queue_depths(&self) -> QueueDepths {
        QueueDepths {
            waiting: self.waiting.len(),
            running: self.running.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.waiting.is_empty() && self.running.is_empty()
    }

    pub fn hol_blocked_steps(&self) -> u64 {
        self.hol_blocked_steps
    }

    pub fn preemptions(&self) -> u64 {
        self.preemptions
    }

    pub fn outstanding(&self, tenant: TenantId) -> u32 {
        self.tenants.get(&tenant).map_or(0, |t| t.outstanding)
    }

    /// Queues a new request at the tail of WAITING.
    pub fn submit(&mut self, mut req: Request) -> Result<(), SchedulerError> {
        if self.requests.contains_key(&req.id) {
            return Err(SchedulerError::DuplicateId(req.id));
        }
        let stats = self.tenants.get(&req.tenant).copied().unwrap_or_default();
        if let Some(q) = &self.config.tenant_quota {
            if let Some(max) = q.max_outstanding_per_tenant {
                if stats.outstanding >= max {
                    return Err(SchedulerError::QuotaExceeded {
                        tenant: req.tenant,
                        reason: "outstanding requests",
                    });
                }
            }
            if let Some(max_ratio) = q.max_expansion_ratio {
                if stats.prompt_tokens > 0 && stats.output_tokens as f64 / stats.prompt_tokens as f64 > max_ratio {
                    return Err(SchedulerError::QuotaExceeded {
                        tenant: req.tenant,
                        reason: "expansion ratio",
                    });
                }
            }
        }
        req.output_limit = match self.config.output_cap {
            Some(cap) => req.target_output_len.min(cap),
            None => req.target_output_len,
        };
        let kv = self.pool.config();
        let usable = u64::from(kv.total_blocks.saturating_sub(kv.watermark_blocks)) * u64::from(kv.block_size);
        let peak = u64::from(req.prompt_len) + u64::from(req.output_limit);
        if peak > usable || req.prompt_len == 0 {
            return Err(SchedulerError::ExceedsCapacity {
                id: req.id,
                tokens: peak,
                capacity: usable,
            });
        }
        req.state = RequestState::Waiting;
        self.tenants.entry(req.tenant).or_default().outstanding += 1;
        self.waiting.push_back(req.id);
        self.requests.insert(req.id, req);
        Ok(())
    }

    /// Admission, prefill chunking, decode appends and preemption for one iteration.
    pub fn step(&mut self) -> ScheduleOutput {
        let mut out = ScheduleOutput::default();
        let mut budget = self.config.token_budget_per_iter;

        // prefill already in progress is served head-first
        for &id in &self.running {
            if budget == 0 {
                break;
            }
            let r = &self.requests[&id];
            if r.in_prefill() {
                let chunk = r.remaining_prefill().min(budget);
                budget -= chunk;
                out.prefill_chunks.push((id, chunk));
            }
        }

        self.admit(&mut out, &mut budget);
        if out.blocked_head.is_some() {
            self.hol_blocked_steps += 1;
        }

        // decode candidates: already decoding, or finishing prefill this step
        let chunks: BTreeMap<RequestId, u32> = out.prefill_chunks.iter().copied().collect();
        let candidates: Vec<RequestId> = self
            .running
            .iter()
            .copied()
            .filter(|id| {
                let r = &self.requests[id];
                !r.in_prefill() || chunks.get(id).is_some_and(|c| *c == r.remaining_prefill())
            })
            .collect();

        for id in candidates {
            if !self.running.contains(&id) {
                continue;
            }
            loop {
                match self.pool.append_token(id).expect("running request holds blocks") {
                    AppendResult::Ok | AppendResult::NeedsBlock { granted: true } => {
                        out.decode_set.push(id);
                        break;
                    }
                    AppendResult::NeedsBlock { granted: false } => {
                        let victim = *self.running.last().expect("requester is running");
                        self.preempt(victim, id, &mut out);
                        if victim == id {
                            break;
                        }
                    }
                }
            }
        }
        out
    }

    fn admit(&mut self, out: &mut ScheduleOutput, budget: &mut u32) {
        while let Some(&head) = self.waiting.front() {
            if let Some(max) = self.config.max_running {
                if self.running.len() >= max as usize {
                    break;
                }
            }
            let state = self.requests[&head].state;
            if state == RequestState::Swapped {
                if !self.pool.can_swap_in(head) {
                    out.blocked_head = Some(head);
                    break;
                }
                let blocks = self.pool.swap_in(head).expect("checked capacity");
                self.waiting.pop_front();
                let seq = self.stamp(head);
                out.swap_in_blocks += blocks;
                out.admitted.push(Admission {
                    id: head,
                    seq,
                    resumed: true,
                    swapped_in_blocks: blocks,
                    prefill_tokens: 0,
                });
                let r = &self.requests[&head];
                if r.in_prefill() && *budget > 0 {
                    let chunk = r.remaining_prefill().min(*budget);
                    *budget -= chunk;
                    out.prefill_chunks.push((head, chunk));
                }
                continue;
            }
            if *budget == 0 {
                break;
            }
            let need = self.requests[&head].admission_tokens();
            if !self.pool.can_allocate(need) {
                out.blocked_head = Some(head);
                break;
            }
            self.pool.allocate(head, need).expect("checked capacity");
            self.waiting.pop_front();
            let resumed = {
                let r = self.requests.get_mut(&head).expect("queued request");
                r.prefill_target = need;
                r.prefill_progress = 0;
                r.kv_tokens = 0;
                r.ever_scheduled
            };
            let seq = self.stamp(head);
            let chunk = need.min(*budget);
            *budget -= chunk;
            out.prefill_chunks.push((head, chunk));
            out.admitted.push(Admission {
                id: head,
                seq,
                resumed,
                swapped_in_blocks: 0,
                prefill_tokens: need,
            });
        }
    }

    fn stamp(&mut self, id: RequestId) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        let r = self.requests.get_mut(&id).expect("known request");
        r.schedule_seq = Some(seq);
        r.state = RequestState::Running;
        r.ever_scheduled = true;
        self.running.push(id);
        seq
    }

    fn preempt(&mut self, victim: RequestId, requester: RequestId, out: &mut ScheduleOutput) {
        let pos = self
            .running
            .iter()
            .position(|r| *r == victim)
            .expect("victim is running");
        self.running.remove(pos);
        out.prefill_chunks.retain(|(id, _)| *id != victim);
        let mode = self.config.recovery_mode;
        let cost = self.apply_recovery(victim, mode);
        if mode == RecoveryMode::Swap {
            out.swap_out_blocks += cost.blocks;
        }
        let r = &self.requests[&victim];
        out.preempted.push(Preemption {
            victim,
            victim_class: r.tenant_class,
            victim_seq: r.schedule_seq.expect("scheduled"),
            requester,
            cost,
        });
        self.waiting.push_front(victim);
        self.preemptions += 1;
    }

    /// Releases the victim's device memory according to `mode`. The caller is
    /// responsible for queue placement.
    pub fn apply_recovery(&mut self, victim: RequestId, mode: RecoveryMode) -> RecoveryCost {
        let r = self.requests.get_mut(&victim).expect("known victim");
        debug_assert_eq!(r.state, RequestState::Running);
        r.preempt_count += 1;
        match mode {
            RecoveryMode::Swap => {
                let blocks = self.pool.swap_out(victim).expect("victim holds blocks");
                r.state = RequestState::Swapped;
                RecoveryCost {
                    mode,
                    blocks,
                    reprefill_tokens: 0,
                }
            }
            RecoveryMode::Recompute => {
                let blocks = self.pool.free(victim).expect("victim holds blocks");
                r.state = RequestState::Waiting;
                r.prefill_progress = 0;
                r.kv_tokens = 0;
                r.prefill_target = r.admission_tokens();
                RecoveryCost {
                    mode,
                    blocks,
                    reprefill_tokens: r.admission_tokens(),
                }
            }
        }
    }

    /// KV resident in the batch this step will execute.
    pub fn batch_context_tokens(&self, out: &ScheduleOutput) -> u64 {
        let chunks: BTreeMap<RequestId, u32> = out.prefill_chunks.iter().copied().collect();
        let mut total = 0u64;
        for (id, chunk) in &chunks {
            total += u64::from(self.requests[id].kv_tokens) + u64::from(*chunk);
        }
        for id in &out.decode_set {
            if !chunks.contains_key(id) {
                total += u64::from(self.requests[id].kv_tokens);
            }
        }
        total
    }

    /// Applies the results of an executed iteration that ended at `t_end_us`.
    pub fn commit(&mut self, out: &ScheduleOutput, t_end_us: u64, gap_us: u64) -> CommitOutput {
        let mut result = CommitOutput::default();
        for (id, chunk) in &out.prefill_chunks {
            let r = self.requests.get_mut(id).expect("chunked request is live");
            r.prefill_progress += chunk;
            r.kv_tokens += chunk;
        }
        for id in &out.decode_set {
            let r = self.requests.get_mut(id).expect("decoding request is live");
            r.generated_len += 1;
            r.kv_tokens += 1;
            if r.first_token_us.is_none() {
                r.first_token_us = Some(t_end_us);
                result.first_tokens.push(*id);
            } else {
                r.itl_trace.push(ItlEntry { t_us: t_end_us, gap_us });
            }
            r.last_token_us = Some(t_end_us);
            result.emitted.push(*id);
            if r.is_done() {
                result.finished.push(self.finish(*id, t_end_us));
            }
        }
        result
    }

    fn finish(&mut self, id: RequestId, t_us: u64) -> Request {
        self.pool.free(id).expect("finished request holds blocks");
        self.running.retain(|r| *r != id);
        let mut r = self.requests.remove(&id).expect("live request");
        r.state = RequestState::Finished;
        r.finish_us = Some(t_us);
        let stats = self.tenants.entry(r.tenant).or_default();
        stats.outstanding -= 1;
        stats.prompt_tokens += u64::from(r.prompt_len);
        stats.output_tokens += u64::from(r.generated_len);
        r
    }

    /// Structural checks used by tests and debug runs.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        self.pool.check_invariants()?;
        let mut seen = alloc::collections::BTreeSet::new();
        for id in self.waiting.iter().chain(self.running.iter()) {
            if !seen.insert(*id) {
                return Err("request queued twice");
            }
        }
        if seen.len() != self.requests.len() {
            return Err("live request missing from queues");
        }
        let seqs: Vec<u64> = self
            .running
            .iter()
            .map(|id| self.requests[id].schedule_seq.unwrap_or(0))
            .collect();
        if seqs.windows(2).any(|w| w[0] >= w[1]) {
            return Err("running not in schedule order");
        }
        for r in self.requests.values() {
            if r.generated_len > r.output_limit {
                return Err("generated past limit");
            }
            if r.first_token_us.is_some() != (r.generated_len >= 1) {
                return Err("first token bookkeeping");
            }
        }
        Ok(())
    }
}
