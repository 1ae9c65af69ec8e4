//! Iteration timing.
//!
//! One scheduler step costs a fixed kernel floor, a compute-bound prefill term,
//! a memory-bound decode term that streams every resident KV token once, and a
//! PCIe term for swap traffic. The decode term is charged on the batch-wide
//! context sum, so every co-scheduled request sees the same iteration time.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModelConfig {
    /// KV bytes per token summed over layers and heads.
    pub kv_bytes_per_token: u64,
    /// Device memory bandwidth, bytes/s.
    pub bw_hbm: f64,
    /// Host link bandwidth, bytes/s.
    pub bw_pcie: f64,
    pub prefill_us_per_token: f64,
    /// Fixed per-iteration cost (weights, launch overhead).
    pub decode_floor_us: f64,
    /// Stddev of the multiplicative jitter; 0 disables noise.
    pub noise_stddev_frac: f64,
}

impl Default for LatencyModelConfig {
    /// An L40S-like node whose default 2048x16-token pool holds 40 GB of KV,
    /// i.e. ~46 ms of decode streaming at full occupancy.
    fn default() -> Self {
        Self {
            kv_bytes_per_token: 1_220_703,
            bw_hbm: 864e9,
            bw_pcie: 32e9,
            prefill_us_per_token: 40.0,
            decode_floor_us: 8_000.0,
            noise_stddev_frac: 0.05,
        }
    }
}

impl LatencyModelConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if self.kv_bytes_per_token == 0
            || !positive(self.bw_hbm)
            || !positive(self.bw_pcie)
            || !positive(self.prefill_us_per_token)
            || !positive(self.decode_floor_us)
        {
            return Err("latency rates must be > 0");
        }
        if !(self.noise_stddev_frac.is_finite() && self.noise_stddev_frac >= 0.0) {
            return Err("latency.noise_stddev_frac must be >= 0");
        }
        Ok(())
    }

    /// Noise-free duration of an iteration in microseconds.
    pub fn base_duration_us(&self, load: &BatchLoad) -> f64 {
        let decode_s = load.total_ctx_tokens as f64 * self.kv_bytes_per_token as f64 / self.bw_hbm;
        let swap_s = load.swap_bytes_this_iter as f64 / self.bw_pcie;
        self.decode_floor_us
            + decode_s * 1e6
            + load.prefill_tokens_this_iter as f64 * self.prefill_us_per_token
            + swap_s * 1e6
    }

    /// Microseconds of decode time per unit of KV usage for a pool of `capacity_tokens`.
    pub fn usage_slope_us(&self, capacity_tokens: u64) -> f64 {
        capacity_tokens as f64 * self.kv_bytes_per_token as f64 / self.bw_hbm * 1e6
    }

    /// Bytes moved over the host link for `blocks` blocks of `block_size` tokens.
    pub fn swap_bytes(&self, blocks: u32, block_size: u32) -> u64 {
        u64::from(blocks) * u64::from(block_size) * self.kv_bytes_per_token
    }
}

/// What a scheduler step put on the device.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchLoad {
    /// Sum of resident context over every request in the batch.
    pub total_ctx_tokens: u64,
    pub prefill_tokens_this_iter: u64,
    pub swap_bytes_this_iter: u64,
}

impl BatchLoad {
    pub fn new(total_ctx_tokens: u64, prefill_tokens: u64, swap_bytes: u64) -> Self {
        Self {
            total_ctx_tokens,
            prefill_tokens_this_iter: prefill_tokens,
            swap_bytes_this_iter: swap_bytes,
        }
    }
}

/// Latency model bound to its noise stream.
#[derive(Debug, Clone)]
pub struct LatencyModel {
    config: LatencyModelConfig,
    noise: Option<Normal<f64>>,
    rng: StreamRng,
}

impl LatencyModel {
    pub fn new(config: LatencyModelConfig, rng: StreamRng) -> Self {
        let noise = (config.noise_stddev_frac > 0.0)
            .then(|| Normal::new(1.0, config.noise_stddev_frac).expect("validated stddev"));
        Self { config, noise, rng }
    }

    pub fn config(&self) -> &LatencyModelConfig {
        &self.config
    }

    /// Duration of one iteration, whole microseconds, at least 1.
    pub fn iteration_duration(&mut self, load: &BatchLoad) -> u64 {
        let mut d = self.config.base_duration_us(load);
        if let Some(noise) = &self.noise {
            d *= noise.sample(&mut self.rng).clamp(0.5, 2.0);
        }
        (libm::round(d) as u64).max(1)
    }
}

/// Every request that emitted a token this iteration observes the whole
/// iteration as its inter-token gap.
pub fn itl_for_iteration(duration_us: u64) -> u64 {
    duration_us
}
