//! Simulated inference requests.

use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::attacker::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Who issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TenantClass {
    Benign,
    Attacker,
    Probe,
}

impl TenantClass {
    pub const ALL: [TenantClass; 3] = [TenantClass::Benign, TenantClass::Attacker, TenantClass::Probe];

    pub fn as_str(&self) -> &'static str {
        match self {
            TenantClass::Benign => "benign",
            TenantClass::Attacker => "attacker",
            TenantClass::Probe => "probe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "benign" => Some(TenantClass::Benign),
            "attacker" => Some(TenantClass::Attacker),
            "probe" => Some(TenantClass::Probe),
            _ => None,
        }
    }

    /// Attacker-owned traffic, including probes.
    pub fn is_adversarial(&self) -> bool {
        !matches!(self, TenantClass::Benign)
    }
}

/// Billing / quota identity. Benign clients get one each; the attacker
/// shares a single identity across payloads and probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TenantId(pub u32);

impl TenantId {
    pub const ATTACKER: TenantId = TenantId(u32::MAX);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RequestState {
    Waiting,
    Running,
    Swapped,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItlEntry {
    pub t_us: u64,
    pub gap_us: u64,
}

#[derive(Debug, Clone)]
pub struct Request {
    pub id: RequestId,
    pub tenant_class: TenantClass,
    pub tenant: TenantId,
    /// Closed-loop client slot that issued this request, if any.
    pub client: Option<u32>,
    /// Payload tier for attacker traffic.
    pub tier: Option<Tier>,
    pub arrival_us: u64,
    pub prompt_len: u32,
    /// Ground-truth output length. Hidden from the attacker.
    pub target_output_len: u32,
    /// `min(target_output_len, output_cap)`, fixed at submission.
    pub output_limit: u32,
    pub generated_len: u32,
    /// Tokens the current admission has to prefill: the prompt, or prompt
    /// plus already generated tokens after a recompute preemption.
    pub prefill_target: u32,
    pub prefill_progress: u32,
    /// Tokens whose KV currently lives on the device.
    pub kv_tokens: u32,
    pub state: RequestState,
    pub schedule_seq: Option<u64>,
    pub first_token_us: Option<u64>,
    pub last_token_us: Option<u64>,
    pub finish_us: Option<u64>,
    pub itl_trace: Vec<ItlEntry>,
    pub preempt_count: u32,
    /// Set once the request has been admitted at least once.
    pub ever_scheduled: bool,
}

impl Request {
    pub fn new(
        id: RequestId,
        tenant_class: TenantClass,
        tenant: TenantId,
        arrival_us: u64,
        prompt_len: u32,
        target_output_len: u32,
    ) -> Self {
        Self {
            id,
            tenant_class,
            tenant,
            client: None,
            tier: None,
            arrival_us,
            prompt_len,
            target_output_len,
            output_limit: target_output_len,
            generated_len: 0,
            prefill_target: prompt_len,
            prefill_progress: 0,
            kv_tokens: 0,
            state: RequestState::Waiting,
            schedule_seq: None,
            first_token_us: None,
            last_token_us: None,
            finish_us: None,
            itl_trace: Vec::new(),
            preempt_count: 0,
            ever_scheduled: false,
        }
    }

    /// Tokens that must be prefilled on the next (re-)admission.
    pub fn admission_tokens(&self) -> u32 {
        self.prompt_len + self.generated_len
    }

    pub fn in_prefill(&self) -> bool {
        self.prefill_progress < self.prefill_target
    }

    pub fn remaining_prefill(&self) -> u32 {
        self.prefill_target - self.prefill_progress
    }

    pub fn is_done(&self) -> bool {
        self.generated_len >= self.output_limit
    }
}
