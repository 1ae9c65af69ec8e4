//! Admission and preemption properties under randomized saturating load.

use kvsim_core::kv::KvConfig;
use kvsim_core::scheduler::ScheduleOutput;
use kvsim_core::{RecoveryMode, Request, RequestId, Scheduler, SchedulerConfig, TenantClass, TenantId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Driver {
    sched: Scheduler,
    rng: ChaCha8Rng,
    next_id: u64,
    t_us: u64,
    cap_tokens: u32,
}

impl Driver {
    fn new(seed: u64, blocks: u32, mode: RecoveryMode, budget: u32) -> Self {
        let kv = KvConfig {
            total_blocks: blocks,
            block_size: 16,
            watermark_blocks: 0,
        };
        let cfg = SchedulerConfig {
            token_budget_per_iter: budget,
            recovery_mode: mode,
            ..SchedulerConfig::default()
        };
        Self {
            sched: Scheduler::new(cfg, kv),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_id: 0,
            t_us: 0,
            cap_tokens: blocks * 16,
        }
    }

    fn arrivals(&mut self) {
        let n = self.rng.random_range(0..3);
        for _ in 0..n {
            let prompt = self.rng.random_range(1..self.cap_tokens / 3);
            let out = self
                .rng
                .random_range(1..(self.cap_tokens - prompt).min(self.cap_tokens / 2));
            let r = Request::new(
                RequestId(self.next_id),
                TenantClass::Benign,
                TenantId(0),
                self.t_us,
                prompt,
                out,
            );
            self.next_id += 1;
            self.sched.submit(r).expect("sized to fit");
        }
    }

    /// One step; returns the waiting queue before the step and the output.
    fn step(&mut self) -> (Vec<RequestId>, ScheduleOutput) {
        self.arrivals();
        let before: Vec<RequestId> = self.sched.waiting().iter().copied().collect();
        let out = self.sched.step();
        self.t_us += 10_000;
        self.sched.commit(&out, self.t_us, 10_000);
        (before, out)
    }
}

fn check_hol(before: &[RequestId], out: &ScheduleOutput) -> Result<(), TestCaseError> {
    if let Some(head) = out.blocked_head {
        let k = out.admitted.len();
        // the admitted set is exactly the prefix ahead of the blocked head
        prop_assert_eq!(before.get(k), Some(&head));
        let admitted: Vec<RequestId> = out.admitted.iter().map(|a| a.id).collect();
        prop_assert_eq!(&admitted[..], &before[..k]);
    }
    Ok(())
}

fn check_lifo(sched: &Scheduler, out: &ScheduleOutput) -> Result<(), TestCaseError> {
    if out.preempted.is_empty() {
        return Ok(());
    }
    let survivors = sched
        .running()
        .iter()
        .map(|id| sched.request(*id).and_then(|r| r.schedule_seq).unwrap())
        .max();
    for w in out.preempted.windows(2) {
        prop_assert!(w[0].victim_seq > w[1].victim_seq);
    }
    let last = out.preempted.last().unwrap();
    if let Some(s) = survivors {
        prop_assert!(last.victim_seq > s);
    }
    // every victim was prepended, so they sit at the front in reverse order
    let waiting: Vec<RequestId> = sched.waiting().iter().copied().collect();
    for (i, p) in out.preempted.iter().rev().enumerate() {
        prop_assert_eq!(waiting[i], p.victim);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hol_lifo_prepend_hold(
        seed in any::<u64>(),
        blocks in 8u32..64,
        swap in any::<bool>(),
        budget in prop_oneof![Just(64u32), Just(512), Just(4096)],
    ) {
        let mode = if swap { RecoveryMode::Swap } else { RecoveryMode::Recompute };
        let mut d = Driver::new(seed, blocks, mode, budget);
        for _ in 0..300 {
            let (before, out) = d.step();
            check_hol(&before, &out)?;
            check_lifo(&d.sched, &out)?;
            prop_assert!(d.sched.check_invariants().is_ok());
        }
    }
}

#[test]
fn saturating_load_exercises_both_paths() {
    let mut d = Driver::new(7, 32, RecoveryMode::Recompute, 512);
    let (mut blocked, mut preempted) = (0, 0);
    for _ in 0..10_000 {
        let (_, out) = d.step();
        blocked += usize::from(out.blocked_head.is_some());
        preempted += out.preempted.len();
    }
    assert!(blocked > 1000, "{blocked}");
    assert!(preempted > 100, "{preempted}");
}
