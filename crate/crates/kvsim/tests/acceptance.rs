//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines always print.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use kvsim::runner;
use kvsim::Scenario;
use kvsim_core::attacker::{cost_of, BaselinePool, CostParadigm};
use kvsim_core::kv::{AppendResult, BlockPool, KvConfig};
use kvsim_core::latency::BatchLoad;
use kvsim_core::probe::{self, ProbeModel};
use kvsim_core::scheduler::ScheduleOutput;
use kvsim_core::sim::{self, RunInputs};
use kvsim_core::workload::{ArrivalProcess, LengthDist, LogNormalSpec, WorkloadConfig};
use kvsim_core::{
    metrics, stats, EventBody, Prices, RecoveryMode, Request, RequestId, RunReport, Scheduler, SchedulerConfig,
    SimConfig, Strategy, TenantClass, TenantId, Usd,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Verdict);

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn point(name: &str, index: usize) -> SimConfig {
    scenario(name).points().expect("shipped scenario is valid")[index]
        .sim
        .clone()
}

fn run(cfg: SimConfig) -> RunReport {
    sim::run(cfg).expect("valid config")
}

fn run_with_model(cfg: SimConfig, model: &ProbeModel) -> RunReport {
    sim::run_with(
        cfg,
        RunInputs {
            trace_rows: None,
            probe_model: Some(model.clone()),
        },
    )
    .expect("valid config")
}

fn benign_mean(r: &RunReport, pick: fn(&metrics::ClassReport) -> Option<metrics::Summary>) -> f64 {
    pick(r.aggregate.benign()).map_or(f64::NAN, |s| s.mean)
}

fn ttft(r: &RunReport) -> f64 {
    benign_mean(r, |c| c.ttft)
}

fn self_preemptions(r: &RunReport) -> u64 {
    r.aggregate.attack.as_ref().map_or(0, |a| a.self_preemptions)
}

// 1. Block conservation against a shadow model.

#[derive(Default)]
struct Shadow {
    resident: BTreeMap<u64, u32>,
    swapped: BTreeMap<u64, u32>,
}

impl Shadow {
    fn free(&self, cfg: &KvConfig) -> u32 {
        cfg.total_blocks - self.resident.values().map(|t| t.div_ceil(cfg.block_size)).sum::<u32>()
    }

    fn room(&self, cfg: &KvConfig, tokens: u32) -> bool {
        self.free(cfg) >= tokens.div_ceil(cfg.block_size) + cfg.watermark_blocks
    }
}

/// Applies one random operation; returns false on any disagreement.
fn kv_op(pool: &mut BlockPool, sh: &mut Shadow, rng: &mut ChaCha8Rng) -> bool {
    let cfg = pool.config().clone();
    let bs = cfg.block_size;
    let id: u64 = rng.random_range(0..6);
    let rid = RequestId(id);
    let agree = match rng.random_range(0..12) {
        0 | 1 => {
            let n = rng.random_range(0..120);
            let ok = !sh.resident.contains_key(&id) && !sh.swapped.contains_key(&id) && sh.room(&cfg, n);
            if ok {
                sh.resident.insert(id, n);
            }
            pool.allocate(rid, n).is_ok() == ok
        }
        2..=7 => match sh.resident.get(&id).copied() {
            None => pool.append_token(rid).is_err(),
            Some(t) => {
                let crosses = (t + 1).div_ceil(bs) > t.div_ceil(bs);
                let granted = !crosses || sh.free(&cfg) > 0;
                let expect = if crosses {
                    AppendResult::NeedsBlock { granted }
                } else {
                    AppendResult::Ok
                };
                if granted {
                    sh.resident.insert(id, t + 1);
                }
                pool.append_token(rid) == Ok(expect)
            }
        },
        8 => pool.free(rid).ok() == sh.resident.remove(&id).map(|t| t.div_ceil(bs)),
        9 => {
            let t = sh.resident.remove(&id);
            if let Some(t) = t {
                sh.swapped.insert(id, t);
            }
            pool.swap_out(rid).ok() == t.map(|t| t.div_ceil(bs))
        }
        10 => {
            let ok = sh.swapped.get(&id).is_some_and(|t| sh.room(&cfg, *t));
            if ok {
                let t = sh.swapped.remove(&id).unwrap();
                sh.resident.insert(id, t);
            }
            pool.swap_in(rid).is_ok() == ok
        }
        _ => pool.discard_swapped(rid).ok() == sh.swapped.remove(&id).map(|t| t.div_ceil(bs)),
    };
    agree
        && pool.free_blocks() == sh.free(&cfg)
        && pool.used_blocks() + pool.free_blocks() == cfg.total_blocks
        && pool.check_invariants().is_ok()
}

fn c1_block_conservation() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xb10c);
    let (mut violations, mut ops) = (0u64, 0u64);
    for _ in 0..100_000 {
        let total = rng.random_range(1..40);
        let cfg = KvConfig {
            total_blocks: total,
            block_size: [1, 4, 16][rng.random_range(0..3)],
            watermark_blocks: rng.random_range(0..3u32).min(total - 1),
        };
        let mut pool = BlockPool::new(cfg);
        let mut sh = Shadow::default();
        for _ in 0..rng.random_range(1..60) {
            ops += 1;
            if !kv_op(&mut pool, &mut sh, &mut rng) {
                violations += 1;
                break;
            }
        }
    }
    let el = t.elapsed();
    verdict(
        violations == 0 && el < Duration::from_secs(10),
        format!("10^5 sequences, {ops} ops, {violations} violations, {el:.1?}"),
    )
}

// 2 and 3. Scheduler properties under randomized saturating load.

struct Driver {
    sched: Scheduler,
    rng: ChaCha8Rng,
    next_id: u64,
    t_us: u64,
    cap: u32,
}

impl Driver {
    fn new(seed: u64, blocks: u32, mode: RecoveryMode, budget: u32) -> Self {
        let cfg = SchedulerConfig {
            token_budget_per_iter: budget,
            recovery_mode: mode,
            ..SchedulerConfig::default()
        };
        let kv = KvConfig {
            total_blocks: blocks,
            block_size: 16,
            watermark_blocks: 0,
        };
        Self {
            sched: Scheduler::new(cfg, kv),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_id: 0,
            t_us: 0,
            cap: blocks * 16,
        }
    }

    fn step(&mut self) -> (Vec<RequestId>, ScheduleOutput) {
        for _ in 0..self.rng.random_range(0..3) {
            let prompt = self.rng.random_range(1..self.cap / 3);
            let out = self.rng.random_range(1..(self.cap - prompt).min(self.cap / 2));
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
        let before: Vec<RequestId> = self.sched.waiting().iter().copied().collect();
        let out = self.sched.step();
        self.t_us += 10_000;
        self.sched.commit(&out, self.t_us, 10_000);
        (before, out)
    }
}

/// A blocked step may only admit the requests queued ahead of the head.
fn hol_ok(before: &[RequestId], out: &ScheduleOutput) -> bool {
    let Some(head) = out.blocked_head else { return true };
    let k = out.admitted.len();
    before.get(k) == Some(&head) && out.admitted.iter().map(|a| a.id).eq(before[..k].iter().copied())
}

/// Victims leave in decreasing admission order, each younger than every
/// survivor, and sit at the queue front in reverse eviction order.
fn lifo_violations(sched: &Scheduler, out: &ScheduleOutput) -> u64 {
    let survivor = sched
        .running()
        .iter()
        .filter_map(|id| sched.request(*id).and_then(|r| r.schedule_seq))
        .max();
    let waiting: Vec<RequestId> = sched.waiting().iter().copied().collect();
    let mut bad = 0;
    for (i, p) in out.preempted.iter().enumerate() {
        let younger_than_rest = out.preempted[i + 1..].iter().all(|q| p.victim_seq > q.victim_seq)
            && survivor.is_none_or(|s| p.victim_seq > s);
        let front = waiting.get(out.preempted.len() - 1 - i) == Some(&p.victim);
        bad += u64::from(!(younger_than_rest && front));
    }
    bad
}

fn c2_hol_blocking() -> Verdict {
    let mut d = Driver::new(7, 32, RecoveryMode::Recompute, 512);
    let (mut blocked, mut violations) = (0u64, 0u64);
    for _ in 0..10_000 {
        let (before, out) = d.step();
        blocked += u64::from(out.blocked_head.is_some());
        violations += u64::from(!hol_ok(&before, &out));
    }
    verdict(
        violations == 0 && blocked > 0,
        format!("10^4 steps, {blocked} blocked-head steps, {violations} violations"),
    )
}

fn c3_lifo_prepend() -> Verdict {
    let (mut victims, mut violations) = (0u64, 0u64);
    for seed in 0..64u64 {
        let mode = if seed % 2 == 0 {
            RecoveryMode::Recompute
        } else {
            RecoveryMode::Swap
        };
        let budget = [64, 512, 4096][(seed % 3) as usize];
        let mut d = Driver::new(seed, 8 + (seed as u32 * 7) % 56, mode, budget);
        for _ in 0..500 {
            let (_, out) = d.step();
            victims += out.preempted.len() as u64;
            violations += lifo_violations(&d.sched, &out);
        }
    }
    verdict(
        violations == 0 && victims > 0,
        format!("64 randomized runs, {victims} victims, {violations} violations"),
    )
}

// 4. ITL against KV usage.

/// Per-iteration (usage, ITL) pairs from `runs` one-shot waves of `c` long
/// requests.
fn wave_pairs(c: u32, runs: u64) -> (Vec<f64>, Vec<f64>) {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for s in 0..runs {
        let mut cfg = SimConfig {
            seed: 100 + s,
            horizon_us: 30_000_000,
            drain: true,
            ..SimConfig::default()
        };
        cfg.workload = WorkloadConfig {
            arrival: ArrivalProcess::ClosedLoop {
                concurrency: c,
                think_us: 1_000_000_000_000,
            },
            length_preset: String::new(),
            lengths: Some(LengthDist {
                prompt: LogNormalSpec {
                    median: 300.0,
                    sigma: 0.9,
                },
                output: LogNormalSpec {
                    median: 5000.0,
                    sigma: 0.5,
                },
            }),
            n_clients: c,
            max_model_len: 8192,
        };
        for e in run(cfg).events.events() {
            if let EventBody::KvSample {
                used_fraction,
                duration_us,
                emitted,
                ..
            } = e.body
            {
                if emitted > 0 {
                    xs.push(used_fraction);
                    ys.push(duration_us as f64);
                }
            }
        }
    }
    (xs, ys)
}

fn c4_itl_linearity() -> Verdict {
    let t = Instant::now();
    let r2 = |c| {
        let (x, y) = wave_pairs(c, 20);
        stats::r_squared(&x, &y)
    };
    let (r1, r4, r8) = (r2(1), r2(4), r2(8));
    let el = t.elapsed();
    verdict(
        r4 >= 0.95 && r8 >= 0.95 && r1 < r8 && el < Duration::from_secs(60),
        format!("R2 C=1 {r1:.3}, C=4 {r4:.3}, C=8 {r8:.3}, {el:.1?}"),
    )
}

// 5. Probe accuracy.

fn c5_probe_accuracy() -> Verdict {
    let t = Instant::now();
    let train = |noise: f64| {
        let mut cfg = SimConfig::default();
        cfg.latency.noise_stddev_frac = noise;
        let edges = sim::training_edges(&cfg);
        let samples = sim::calibration_samples(&cfg, &edges).unwrap();
        (probe::train(&samples, &edges, 8, &cfg.probe.hyper).unwrap(), cfg)
    };
    let (noisy, _) = train(SimConfig::default().latency.noise_stddev_frac);
    let (clean, cfg) = train(0.0);
    // decode-only windows straight from the noiseless latency model
    let window = |u: f64| {
        let ctx = (u * cfg.kv.capacity_tokens() as f64) as u64;
        let d = cfg.latency.base_duration_us(&BatchLoad::new(ctx, 0, 0)).round() as u64;
        vec![d; cfg.probe.window as usize]
    };
    let bin = |u: f64| clean.model.predict(&window(u)).unwrap().bin;
    let bins: Vec<usize> = (0..100).map(|k| bin((k as f64 + 0.5) / 100.0)).collect();
    let monotone = bins.windows(2).all(|w| w[0] <= w[1]);
    let ends = bin(0.02) == 0 && bin(0.97) == 9;
    let el = t.elapsed();
    verdict(
        noisy.holdout_accuracy >= 0.85
            && clean.holdout_accuracy >= 0.95
            && monotone
            && ends
            && el < Duration::from_secs(120),
        format!(
            "held-out {:.3} default noise, {:.3} noiseless, sweep monotone {monotone}, end bins {ends}, {el:.1?}",
            noisy.holdout_accuracy, clean.holdout_accuracy
        ),
    )
}

// 6. Babbling at a fixed interval below saturation.

fn c6_latency_attacks_dont_delay() -> Verdict {
    let seeds = 1..=3u64;
    let mut sums = [[0.0; 3]; 2];
    let mut max_usage: f64 = 0.0;
    for seed in seeds.clone() {
        for (k, idx) in [0, 1].into_iter().enumerate() {
            let mut cfg = point("babbling-baseline", idx);
            cfg.seed = seed;
            let r = run(cfg);
            sums[k][0] += ttft(&r);
            sums[k][1] += benign_mean(&r, |c| c.tpot);
            sums[k][2] += benign_mean(&r, |c| c.e2e);
            max_usage = max_usage.max(r.aggregate.band_occupancy);
        }
    }
    let ratio = |i: usize| sums[1][i] / sums[0][i];
    let (t, p, e) = (ratio(0), ratio(1), ratio(2));
    verdict(
        t <= 1.5 && e <= 1.15 && p > 1.05,
        format!("over seeds 1-3: TTFT {t:.3}x, TPOT {p:.3}x, E2E {e:.3}x, time above c_sat {max_usage:.3}"),
    )
}

// 7. Fill and Squeeze against babbling at equal token budget.

fn c7_fill_squeeze_efficacy() -> Verdict {
    let mut cfg = point("fs-plain-text", 0);
    cfg.seed = 1;
    let fs = run(cfg.clone());
    let budget = fs.aggregate.attack.as_ref().unwrap().ledger.total_tokens();
    cfg.attacker.strategy = Strategy::FixedInterval {
        period_us: None,
        pool: BaselinePool::Babbling,
    };
    cfg.attacker.token_budget = Some(budget);
    let bab = run(cfg);
    let ratio = ttft(&fs) / ttft(&bab);
    let pre = fs.aggregate.total_preemptions;
    let cross = fs.aggregate.c_sat_crossings;
    verdict(
        ratio >= 10.0 && pre > 0 && cross >= 10,
        format!(
            "benign TTFT {:.2}s vs {:.3}s ({ratio:.0}x) at {budget} tokens each, {pre} preemptions, {cross} c_sat crossings",
            ttft(&fs) / 1e6,
            ttft(&bab) / 1e6
        ),
    )
}

// 8. Cost of holding the high band.

fn c8_cost_effectiveness() -> Verdict {
    let seeds = [11u64, 12, 13];
    let mut base = SimConfig {
        seed: seeds[0],
        horizon_us: 14_400_000_000,
        ..SimConfig::default()
    };
    base.kv.total_blocks = 16_384;
    base.workload.length_preset = "sharegpt-like".into();
    base.workload.arrival = ArrivalProcess::Poisson { rate_per_s: 0.6 / 16.0 };
    let mut fs_cfg = base.clone();
    fs_cfg.attacker.strategy = Strategy::FillSqueeze;
    let model = sim::attacker_probe(&fs_cfg).unwrap().model;

    // cheapest quota on the ladder that holds the band 90% of the time in
    // every seed; cost summed over the seeds
    let cheapest = |strategy: Strategy| {
        for q in [1u32, 2, 4, 8, 16] {
            let mut band: f64 = 1.0;
            let mut cost = 0.0;
            for seed in seeds {
                let mut cfg = base.clone();
                cfg.seed = seed;
                cfg.attacker.strategy = strategy.clone();
                cfg.attacker.concurrency_quota = Some(q);
                let r = run_with_model(cfg, &model);
                band = band.min(r.aggregate.band_occupancy);
                cost += r.aggregate.attack.unwrap().cost_usd;
                if band < 0.9 {
                    break;
                }
            }
            if band >= 0.9 {
                return Some((q, band, cost));
            }
        }
        None
    };
    match (cheapest(Strategy::FillSqueeze), cheapest(Strategy::ContinuousHigh)) {
        (Some((qf, bf, cf)), Some((qc, bc, cc))) => verdict(
            cf <= 0.8 * cc,
            format!(
                "seeds 11-13: F&S ${cf:.4} (quota {qf}, min band {bf:.3}) vs continuous high ${cc:.4} (quota {qc}, min band {bc:.3}), ratio {:.2}",
                cf / cc
            ),
        ),
        (f, c) => verdict(false, format!("band never reached: F&S {f:?}, continuous high {c:?}")),
    }
}

// 9. Back-off.

fn c9_backoff() -> Verdict {
    let mut pairs = Vec::new();
    for seed in 1..=6u64 {
        let mut cfg = point("fs-plain-text", 0);
        cfg.seed = seed;
        cfg.attacker.concurrency_quota = Some(12);
        let on = self_preemptions(&run(cfg.clone()));
        cfg.attacker.backoff = false;
        let off = self_preemptions(&run(cfg));
        pairs.push((on, off));
    }
    let shown: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}<{b}")).collect();
    verdict(
        pairs.iter().all(|(a, b)| a < b),
        format!("self-preemptions on<off, seeds 1-6: {}", shown.join(" ")),
    )
}

// 10. Capacity and the length cap.

fn c10_capacity_scaling() -> Verdict {
    let mut rows = Vec::new();
    let mut ok = true;
    for seed in 1..=3u64 {
        let mut r = [0, 1].map(|i| {
            let mut cfg = point("capacity", i);
            cfg.seed = seed;
            run(cfg)
        });
        let [small, big] = &mut r;
        let (ps, pb) = (small.aggregate.total_preemptions, big.aggregate.total_preemptions);
        let (ts, tb) = (ttft(small), ttft(big));
        ok &= pb < ps && tb < ts;
        rows.push(format!(
            "{ps}->{pb} preemptions, {:.1}->{:.1}s TTFT",
            ts / 1e6,
            tb / 1e6
        ));
    }
    let slow = |capped: bool| {
        let [none, fs] = [0, 1].map(|i| {
            let mut cfg = point("length-cap", i);
            if !capped {
                cfg.scheduler.output_cap = None;
            }
            run(cfg)
        });
        metrics::slowdown(&fs.aggregate, &none.aggregate).unwrap().ttft
    };
    let (capped, uncapped) = (slow(true), slow(false));
    ok &= capped < 2.0;
    verdict(
        ok,
        format!(
            "2048->4096 blocks: {}; length cap F&S slowdown {capped:.2}x (uncapped {uncapped:.0}x)",
            rows.join("; ")
        ),
    )
}

// 11. Byte-identical reruns.

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn c11_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let (mut compared, mut differing) = (0, Vec::new());
    for name in [
        "benign-only",
        "babbling-baseline",
        "fs-plain-text",
        "length-cap",
        "probe-calibration",
    ] {
        let mut sc = scenario(name);
        sc.sim.horizon_us = sc.sim.horizon_us.min(120_000_000);
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        runner::simulate(&sc, Some(5), &a).unwrap();
        runner::simulate(&sc, Some(5), &b).unwrap();
        let fa = files_under(&a.join(name));
        if fa != files_under(&b.join(name)) {
            differing.push(format!("{name}: file sets"));
        }
        for f in &fa {
            compared += 1;
            if fs::read(a.join(name).join(f)).unwrap() != fs::read(b.join(name).join(f)).unwrap() {
                differing.push(format!("{name}/{}", f.display()));
            }
        }
    }
    verdict(
        differing.is_empty() && compared > 0,
        format!("{compared} files compared across 5 scenarios, differing: {differing:?}"),
    )
}

// 12. Cost formula against wide-integer arithmetic.

fn token_units(tokens: u64, cents_per_mtok: u64) -> u128 {
    tokens as u128 * cents_per_mtok as u128 * Usd::UNITS_PER_DOLLAR as u128 / (100 * 1_000_000)
}

fn cost_oracle(p: &CostParadigm, prices: &Prices) -> u128 {
    let pair =
        |i: u64, o: u64| token_units(i, prices.input_cents_per_mtok) + token_units(o, prices.output_cents_per_mtok);
    match p {
        CostParadigm::PlainText { h_in, h_out } => pair(*h_in, *h_out),
        CostParadigm::BlackBox { iterations } => iterations.iter().map(|(i, o)| pair(*i, *o)).sum(),
        CostParadigm::WhiteBox {
            t_opt_s,
            p_avg_w,
            p_e_micro_usd_per_kwh,
        } => {
            *t_opt_s as u128 * *p_avg_w as u128 * *p_e_micro_usd_per_kwh as u128 * Usd::UNITS_PER_DOLLAR as u128
                / (3_600_000 * 1_000_000)
        }
    }
}

fn c12_cost_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc057);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let prices = Prices {
            input_cents_per_mtok: rng.random_range(0..10_000),
            output_cents_per_mtok: rng.random_range(0..10_000),
        };
        let p = match rng.random_range(0..3) {
            0 => CostParadigm::PlainText {
                h_in: rng.random_range(0..5_000_000),
                h_out: rng.random_range(0..5_000_000),
            },
            1 => CostParadigm::BlackBox {
                iterations: (0..rng.random_range(0..12))
                    .map(|_| (rng.random_range(0..5_000_000), rng.random_range(0..5_000_000)))
                    .collect(),
            },
            _ => CostParadigm::WhiteBox {
                t_opt_s: rng.random_range(0..1_000_000),
                p_avg_w: rng.random_range(0..2_000),
                p_e_micro_usd_per_kwh: rng.random_range(0..1_000_000),
            },
        };
        mismatches += u32::from(u128::from(cost_of(&p, &prices).0) != cost_oracle(&p, &prices));
    }
    verdict(mismatches == 0, format!("1000 random inputs, {mismatches} mismatches"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("block conservation", c1_block_conservation),
        ("HOL blocking", c2_hol_blocking),
        ("LIFO and prepend", c3_lifo_prepend),
        ("ITL-KV linearity", c4_itl_linearity),
        ("probe accuracy", c5_probe_accuracy),
        ("latency attacks don't delay", c6_latency_attacks_dont_delay),
        ("F&S efficacy", c7_fill_squeeze_efficacy),
        ("cost-effectiveness", c8_cost_effectiveness),
        ("back-off value", c9_backoff),
        ("capacity scaling", c10_capacity_scaling),
        ("determinism", c11_determinism),
        ("cost-model oracle", c12_cost_oracle),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = f();
        failed += usize::from(!v.pass);
        println!(
            "criterion {:>2} {:<28} {}  {} [{:.1?}]",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed()
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
