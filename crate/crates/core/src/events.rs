//! Append-only run trace.
//!
//! Serialized one event per line as `{t_us, request_id?, kind, detail}`.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::attacker::{Regime, Tier};
use crate::request::{RequestId, TenantClass};
use crate::scheduler::RecoveryMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum EventBody {
    Arrival {
        class: TenantClass,
        prompt_len: u32,
        output_len: u32,
    },
    /// Refused at submission (quota or capacity).
    Rejected {
        class: TenantClass,
        reason: alloc::string::String,
    },
    Admission {
        seq: u64,
        prefill_tokens: u32,
    },
    /// Re-admission after a preemption.
    Resume {
        seq: u64,
        prefill_tokens: u32,
        swapped_in_blocks: u32,
    },
    FirstToken {},
    /// Only recorded when token tracing is switched on.
    TokenEmitted {
        n: u32,
        gap_us: u64,
    },
    Preemption {
        class: TenantClass,
        victim_seq: u64,
        requester: RequestId,
        mode: RecoveryMode,
        blocks: u32,
        generated: u32,
    },
    Finish {
        class: TenantClass,
        n_output: u32,
        preempt_count: u32,
    },
    ProbeDispatched {
        prompt_len: u32,
    },
    AttackDispatched {
        tier: Tier,
        prompt_len: u32,
        /// Controller inputs; absent for scheduler-oblivious strategies.
        estimate: Option<f64>,
        delta_mem: Option<f64>,
        regime: Option<Regime>,
    },
    BackOff {
        estimate: f64,
        delta_mem: f64,
        until_us: u64,
    },
    /// One per executed iteration, stamped at its end.
    KvSample {
        used_fraction: f64,
        duration_us: u64,
        waiting: u32,
        running: u32,
        blocked: bool,
        emitted: u32,
    },
    RunEnd {
        iterations: u64,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Arrival { .. } => "Arrival",
            EventBody::Rejected { .. } => "Rejected",
            EventBody::Admission { .. } => "Admission",
            EventBody::Resume { .. } => "Resume",
            EventBody::FirstToken {} => "FirstToken",
            EventBody::TokenEmitted { .. } => "TokenEmitted",
            EventBody::Preemption { .. } => "Preemption",
            EventBody::Finish { .. } => "Finish",
            EventBody::ProbeDispatched { .. } => "ProbeDispatched",
            EventBody::AttackDispatched { .. } => "AttackDispatched",
            EventBody::BackOff { .. } => "BackOff",
            EventBody::KvSample { .. } => "KvSample",
            EventBody::RunEnd { .. } => "RunEnd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<RequestId>,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event. Timestamps must not go backwards.
    pub fn push(&mut self, t_us: u64, request_id: Option<RequestId>, body: EventBody) {
        debug_assert!(
            self.events.last().is_none_or(|e| e.t_us <= t_us),
            "event at {t_us} after {:?}",
            self.events.last().map(|e| e.t_us)
        );
        self.events.push(Event { t_us, request_id, body });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn from_events(events: Vec<Event>) -> Self {
        Self { events }
    }

    pub fn is_monotone(&self) -> bool {
        self.events.windows(2).all(|w| w[0].t_us <= w[1].t_us)
    }

    /// Every preemption is followed by a resume of the same request, or the
    /// run ends first.
    pub fn preemptions_resolved(&self) -> bool {
        let mut open = alloc::collections::BTreeSet::new();
        for e in &self.events {
            match (&e.body, e.request_id) {
                (EventBody::Preemption { .. }, Some(id)) => {
                    open.insert(id);
                }
                (EventBody::Resume { .. }, Some(id)) => {
                    open.remove(&id);
                }
                (EventBody::RunEnd { .. }, _) => return true,
                _ => {}
            }
        }
        open.is_empty()
    }
}
