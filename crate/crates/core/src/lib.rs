//! Deterministic simulator of a continuous-batching LLM serving node.
//!
//! The crate models one serving replica at iteration granularity: a paged
//! KV-cache block pool, an FCFS scheduler with chunked prefill and LIFO
//! preemption, and a bandwidth-bound latency model that turns batch state into
//! iteration durations. On top of that it carries a scheduler-aware adversary
//! (tiered payloads, an inter-token-latency side channel classified by a small
//! gradient-boosted ensemble, and a closed-loop fill/squeeze controller) plus
//! the metrics needed to compare runs.
//!
//! ```text
//!  workload ─┐                        ┌─> metrics / event log
//!            ├─> scheduler ─> latency ┤
//!  attacker ─┘      │                 └─> probe windows ─> controller ─┐
//!     ^             └── kv block pool                                  │
//!     └────────────────────────────────────────────────────────────────┘
//! ```
//!
//! Everything here is `no_std` + `alloc`. File formats, scenario files and the
//! command line live in the `kvsim` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attacker;
pub mod events;
pub mod kv;
pub mod latency;
pub mod metrics;
pub mod probe;
pub mod request;
pub mod rng;
pub mod scheduler;
pub mod sim;
pub mod stats;
pub mod workload;

pub use attacker::{AttackerConfig, CostLedger, Prices, Strategy, Tier, Usd};
pub use events::{Event, EventBody, EventLog};
pub use kv::{BlockPool, KvConfig, KvUsageSample};
pub use latency::{BatchLoad, LatencyModel, LatencyModelConfig};
pub use metrics::{AggregateReport, MetricsRecord};
pub use probe::{ProbeConfig, ProbeModel};
pub use request::{Request, RequestId, RequestState, TenantClass, TenantId};
pub use scheduler::{RecoveryMode, Scheduler, SchedulerConfig};
pub use sim::{run, ConfigError, RunReport, SimConfig, Simulation};
pub use workload::WorkloadConfig;
