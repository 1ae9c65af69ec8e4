//! Paged KV-cache block accounting.
//!
//! The pool tracks how many fixed-size token pages each request holds on the
//! device, plus the pages parked in host memory by swap-based preemption.
//! Prompt and generated tokens share one allocation per request.

use alloc::collections::BTreeMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::request::RequestId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KvConfig {
    /// Device blocks in the pool.
    pub total_blocks: u32,
    /// Tokens per block.
    pub block_size: u32,
    /// Blocks admission keeps in reserve.
    pub watermark_blocks: u32,
}

impl Default for KvConfig {
    fn default() -> Self {
        Self {
            total_blocks: 2048,
            block_size: 16,
            watermark_blocks: 0,
        }
    }
}

impl KvConfig {
    pub fn capacity_tokens(&self) -> u64 {
        u64::from(self.total_blocks) * u64::from(self.block_size)
    }

    pub fn blocks_for(&self, tokens: u32) -> u32 {
        tokens.div_ceil(self.block_size)
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.total_blocks == 0 || self.block_size == 0 {
            return Err("kv.total_blocks and kv.block_size must be >= 1");
        }
        if self.watermark_blocks >= self.total_blocks {
            return Err("kv.watermark_blocks must be below kv.total_blocks");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KvError {
    #[error("insufficient blocks: need {needed}, {free} free")]
    InsufficientBlocks { needed: u32, free: u32 },
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("request {0} already holds blocks")]
    AlreadyAllocated(RequestId),
}

/// Outcome of growing a request's context by one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendResult {
    /// The token fits in an already-held block.
    Ok,
    /// The token crossed a block boundary. `granted == false` leaves state
    /// untouched and means the scheduler has to reclaim memory.
    NeedsBlock { granted: bool },
}

/// Global KV usage at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KvUsageSample {
    pub t_us: u64,
    pub used_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Allocation {
    blocks: u32,
    tokens: u32,
}

/// The device block pool and the host-side swap area.
#[derive(Debug, Clone)]
pub struct BlockPool {
    config: KvConfig,
    free_blocks: u32,
    allocations: BTreeMap<RequestId, Allocation>,
    swapped: BTreeMap<RequestId, Allocation>,
}

impl BlockPool {
    pub fn new(config: KvConfig) -> Self {
        Self {
            free_blocks: config.total_blocks,
            config,
            allocations: BTreeMap::new(),
            swapped: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &KvConfig {
        &self.config
    }

    pub fn total_blocks(&self) -> u32 {
        self.config.total_blocks
    }

    pub fn free_blocks(&self) -> u32 {
        self.free_blocks
    }

    pub fn block_size(&self) -> u32 {
        self.config.block_size
    }

    pub fn used_blocks(&self) -> u32 {
        self.config.total_blocks - self.free_blocks
    }

    /// Blocks held on the device by `id`, if any.
    pub fn allocated(&self, id: RequestId) -> Option<u32> {
        self.allocations.get(&id).map(|a| a.blocks)
    }

    /// Tokens covered by the device allocation of `id`.
    pub fn allocated_tokens(&self, id: RequestId) -> Option<u32> {
        self.allocations.get(&id).map(|a| a.tokens)
    }

    /// Blocks held in host memory by `id`, if any.
    pub fn swapped(&self, id: RequestId) -> Option<u32> {
        self.swapped.get(&id).map(|a| a.blocks)
    }

    pub fn allocations(&self) -> impl Iterator<Item = (RequestId, u32)> + '_ {
        self.allocations.iter().map(|(id, a)| (*id, a.blocks))
    }

    /// Admission predicate: room for the prompt plus the watermark reserve.
    pub fn can_allocate(&self, prompt_tokens: u32) -> bool {
        let needed = self.config.blocks_for(prompt_tokens);
        self.has_room_for(needed)
    }

    fn has_room_for(&self, blocks: u32) -> bool {
        u64::from(self.free_blocks) >= u64::from(blocks) + u64::from(self.config.watermark_blocks)
    }

    pub fn allocate(&mut self, id: RequestId, prompt_tokens: u32) -> Result<u32, KvError> {
        if self.allocations.contains_key(&id) || self.swapped.contains_key(&id) {
            return Err(KvError::AlreadyAllocated(id));
        }
        let needed = self.config.blocks_for(prompt_tokens);
        if !self.has_room_for(needed) {
            return Err(KvError::InsufficientBlocks {
                needed,
                free: self.free_blocks,
            });
        }
        self.free_blocks -= needed;
        self.allocations.insert(
            id,
            Allocation {
                blocks: needed,
                tokens: prompt_tokens,
            },
        );
        Ok(needed)
    }

    pub fn append_token(&mut self, id: RequestId) -> Result<AppendResult, KvError> {
        let block_size = self.config.block_size;
        let alloc = self.allocations.get_mut(&id).ok_or(KvError::UnknownRequest(id))?;
        let next = alloc.tokens + 1;
        if u64::from(next) <= u64::from(alloc.blocks) * u64::from(block_size) {
            alloc.tokens = next;
            return Ok(AppendResult::Ok);
        }
        if self.free_blocks == 0 {
            return Ok(AppendResult::NeedsBlock { granted: false });
        }
        self.free_blocks -= 1;
        alloc.blocks += 1;
        alloc.tokens = next;
        Ok(AppendResult::NeedsBlock { granted: true })
    }

    pub fn free(&mut self, id: RequestId) -> Result<u32, KvError> {
        let alloc = self.allocations.remove(&id).ok_or(KvError::UnknownRequest(id))?;
        self.free_blocks += alloc.blocks;
        Ok(alloc.blocks)
    }

    /// Moves the device blocks of `id` to host memory.
    pub fn swap_out(&mut self, id: RequestId) -> Result<u32, KvError> {
        let alloc = self.allocations.remove(&id).ok_or(KvError::UnknownRequest(id))?;
        self.free_blocks += alloc.blocks;
        self.swapped.insert(id, alloc);
        Ok(alloc.blocks)
    }

    pub fn can_swap_in(&self, id: RequestId) -> bool {
        self.swapped.get(&id).is_some_and(|a| self.has_room_for(a.blocks))
    }

    /// Brings the blocks of `id` back onto the device.
    pub fn swap_in(&mut self, id: RequestId) -> Result<u32, KvError> {
        let alloc = *self.swapped.get(&id).ok_or(KvError::UnknownRequest(id))?;
        if !self.has_room_for(alloc.blocks) {
            return Err(KvError::InsufficientBlocks {
                needed: alloc.blocks,
                free: self.free_blocks,
            });
        }
        self.swapped.remove(&id);
        self.free_blocks -= alloc.blocks;
        self.allocations.insert(id, alloc);
        Ok(alloc.blocks)
    }

    /// Drops a host-side copy without restoring it.
    pub fn discard_swapped(&mut self, id: RequestId) -> Result<u32, KvError> {
        self.swapped
            .remove(&id)
            .map(|a| a.blocks)
            .ok_or(KvError::UnknownRequest(id))
    }

    pub fn used_fraction(&self) -> f64 {
        f64::from(self.used_blocks()) / f64::from(self.config.total_blocks)
    }

    pub fn usage(&self, t_us: u64) -> KvUsageSample {
        KvUsageSample {
            t_us,
            used_fraction: self.used_fraction(),
        }
    }

    /// Conservation check: free + allocated = total, every allocation covers its tokens.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        let held: u64 = self.allocations.values().map(|a| u64::from(a.blocks)).sum();
        if held + u64::from(self.free_blocks) != u64::from(self.config.total_blocks) {
            return Err("free + allocated != total");
        }
        if self.free_blocks > self.config.total_blocks {
            return Err("free exceeds total");
        }
        let covers = |a: &Allocation| a.blocks >= self.config.blocks_for(a.tokens);
        if !self.allocations.values().all(covers) || !self.swapped.values().all(covers) {
            return Err("allocation smaller than its context");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool(total: u32, watermark: u32) -> BlockPool {
        BlockPool::new(KvConfig {
            total_blocks: total,
            block_size: 16,
            watermark_blocks: watermark,
        })
    }

    fn drain_to(p: &mut BlockPool, free: u32) {
        let take = p.free_blocks() - free;
        p.allocate(RequestId(999_999), take * 16).unwrap();
    }

    #[test]
    fn can_allocate_uses_ceiling_and_watermark() {
        let mut p = pool(10, 0);
        drain_to(&mut p, 2);
        assert!(!p.can_allocate(40));

        let mut p = pool(10, 0);
        drain_to(&mut p, 1);
        assert!(p.can_allocate(1));

        let mut p = pool(10, 1);
        drain_to(&mut p, 1);
        assert!(!p.can_allocate(16));
    }

    #[test]
    fn allocate_rounds_up() {
        let mut p = pool(10, 0);
        assert_eq!(p.allocate(RequestId(1), 33), Ok(3));
        assert_eq!(p.allocate(RequestId(2), 16), Ok(1));
        assert_eq!(p.free_blocks(), 6);
    }

    #[test]
    fn allocate_past_capacity_fails() {
        let mut p = pool(4, 0);
        p.allocate(RequestId(1), 48).unwrap();
        assert_eq!(
            p.allocate(RequestId(2), 32),
            Err(KvError::InsufficientBlocks { needed: 2, free: 1 })
        );
        assert_eq!(p.free_blocks(), 1);
    }

    #[test]
    fn append_crosses_boundaries() {
        let mut p = pool(2, 0);
        p.allocate(RequestId(1), 15).unwrap();
        assert_eq!(p.append_token(RequestId(1)), Ok(AppendResult::Ok));
        assert_eq!(
            p.append_token(RequestId(1)),
            Ok(AppendResult::NeedsBlock { granted: true })
        );
        assert_eq!(p.free_blocks(), 0);

        let mut p = pool(1, 0);
        p.allocate(RequestId(1), 16).unwrap();
        assert_eq!(
            p.append_token(RequestId(1)),
            Ok(AppendResult::NeedsBlock { granted: false })
        );
        assert_eq!(p.allocated_tokens(RequestId(1)), Some(16));
        assert_eq!(p.append_token(RequestId(2)), Err(KvError::UnknownRequest(RequestId(2))));
    }

    #[test]
    fn free_and_double_free() {
        let mut p = pool(10, 0);
        p.allocate(RequestId(1), 48).unwrap();
        p.allocate(RequestId(2), 10).unwrap();
        assert_eq!(p.free(RequestId(1)), Ok(3));
        assert_eq!(p.free(RequestId(1)), Err(KvError::UnknownRequest(RequestId(1))));
        p.free(RequestId(2)).unwrap();
        assert_eq!(p.free_blocks(), 10);
    }

    #[test]
    fn swap_round_trip_and_capacity() {
        let mut p = pool(10, 0);
        p.allocate(RequestId(1), 80).unwrap();
        assert_eq!(p.swap_out(RequestId(1)), Ok(5));
        assert_eq!(p.free_blocks(), 10);
        assert_eq!(p.swapped(RequestId(1)), Some(5));
        assert_eq!(p.swap_in(RequestId(1)), Ok(5));
        assert_eq!(p.allocated(RequestId(1)), Some(5));
        assert_eq!(p.allocated_tokens(RequestId(1)), Some(80));

        p.swap_out(RequestId(1)).unwrap();
        drain_to(&mut p, 4);
        assert!(!p.can_swap_in(RequestId(1)));
        assert_eq!(
            p.swap_in(RequestId(1)),
            Err(KvError::InsufficientBlocks { needed: 5, free: 4 })
        );
    }

    #[test]
    fn usage_fraction() {
        let mut p = pool(1000, 0);
        assert_eq!(p.usage(0).used_fraction, 0.0);
        p.allocate(RequestId(1), 975 * 16).unwrap();
        assert_eq!(p.usage(5).used_fraction, 0.975);
        p.allocate(RequestId(2), 25 * 16).unwrap();
        assert_eq!(p.usage(6).used_fraction, 1.0);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Alloc(u64, u32),
        Append(u64),
        Free(u64),
        SwapOut(u64),
        SwapIn(u64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u64..8, 1u32..200).prop_map(|(id, n)| Op::Alloc(id, n)),
            (0u64..8).prop_map(Op::Append),
            (0u64..8).prop_map(Op::Free),
            (0u64..8).prop_map(Op::SwapOut),
            (0u64..8).prop_map(Op::SwapIn),
        ]
    }

    proptest! {
        #[test]
        fn conservation_holds(ops in proptest::collection::vec(op(), 1..200)) {
            let mut p = pool(32, 1);
            for op in ops {
                let before = p.clone();
                let res = match op {
                    Op::Alloc(id, n) => p.allocate(RequestId(id), n).map(|_| ()),
                    Op::Append(id) => p.append_token(RequestId(id)).map(|_| ()),
                    Op::Free(id) => p.free(RequestId(id)).map(|_| ()),
                    Op::SwapOut(id) => p.swap_out(RequestId(id)).map(|_| ()),
                    Op::SwapIn(id) => p.swap_in(RequestId(id)).map(|_| ()),
                };
                if res.is_err() {
                    prop_assert_eq!(p.free_blocks(), before.free_blocks());
                }
                prop_assert!(p.check_invariants().is_ok());
            }
        }

        #[test]
        fn swap_out_in_is_identity(n in 1u32..400, pre in 0u32..300) {
            let mut p = pool(64, 0);
            p.allocate(RequestId(0), pre.max(1)).unwrap();
            prop_assume!(p.can_allocate(n));
            p.allocate(RequestId(1), n).unwrap();
            let snapshot: alloc::vec::Vec<_> = p.allocations().collect();
            p.swap_out(RequestId(1)).unwrap();
            p.swap_in(RequestId(1)).unwrap();
            let after: alloc::vec::Vec<_> = p.allocations().collect();
            prop_assert_eq!(snapshot, after);
        }
    }
}
