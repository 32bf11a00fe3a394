//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.

mod common;

use std::collections::VecDeque;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ultrashare::presets::{
    bandwidth_sharing, dynamic_vs_static, equal_sharing, mixed_service_times, page_rate, staircase,
    static_maps,
};
use ultrashare::{
    allocate_step, compact_sg, decode_sg, run_scenario, AcceleratorStatus, Command, CommandQueue,
    ControllerMode, GroupTable, MetricsReport, PriorityTable, ScenarioConfig, SgElement, SimTime,
    WeightedScheduler,
};

use common::{check_invariants, run_traced, within};

type Check = Result<String, String>;

struct Suite {
    failed: usize,
    /// Every scenario the criteria ran, for the invariant suite.
    scenarios: Vec<(String, ScenarioConfig)>,
}

impl Suite {
    fn criterion(
        &mut self,
        n: u32,
        name: &str,
        limit: Duration,
        f: impl FnOnce(&mut Self) -> Check,
    ) {
        let start = Instant::now();
        let mut result = f(self);
        let took = start.elapsed();
        if result.is_ok() && took > limit {
            result = Err(format!("took {took:.2?}, limit {limit:?}"));
        }
        match result {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{took:.2?}] {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("criterion {n} ({name}): FAIL [{took:.2?}] {detail}");
            }
        }
    }

    fn run(&mut self, label: &str, cfg: ScenarioConfig) -> Result<MetricsReport, String> {
        let r = run_scenario(&cfg).map_err(|e| format!("{label}: {e}"))?;
        self.scenarios.push((label.to_string(), cfg));
        Ok(r)
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn idle_time_removal(s: &mut Suite) -> Check {
    let single = s.run(
        "mixed/single-queue",
        mixed_service_times(ControllerMode::SingleQueue),
    )?;
    let ultra = s.run(
        "mixed/ultrashare",
        mixed_service_times(ControllerMode::Ultrashare),
    )?;
    let sq_fast = single.type_throughput_rps(0);
    let sq_slow = single.type_throughput_rps(2);
    let us_fast = ultra.type_throughput_rps(0);
    ensure(within(sq_fast, sq_slow, 0.25), || {
        format!("single-queue fast {sq_fast:.0} rps not within 25% of slow {sq_slow:.0} rps")
    })?;
    let gain = us_fast / sq_fast;
    ensure(gain >= 6.0, || format!("fast-type gain {gain:.2}x < 6x"))?;
    Ok(format!(
        "single-queue fast/slow = {:.3}, multi-queue fast gain = {gain:.2}x",
        sq_fast / sq_slow
    ))
}

fn dynamic_vs_static_allocation(s: &mut Suite) -> Check {
    let dynamic = s
        .run("two-accs/dynamic", dynamic_vs_static(None))?
        .throughput_rps();
    let mut worst_ratio = f64::INFINITY;
    let mut min_ratio = f64::INFINITY;
    for m in static_maps() {
        let r = s
            .run(
                &format!("two-accs/static {m:?}"),
                dynamic_vs_static(Some(m)),
            )?
            .throughput_rps();
        ensure(r > 0.0, || format!("static {m:?} completed nothing"))?;
        let ratio = dynamic / r;
        ensure(ratio >= 1.0, || {
            format!("dynamic {dynamic:.1} rps below static {m:?} at {r:.1} rps")
        })?;
        min_ratio = min_ratio.min(ratio);
        if m == [0, 0, 0] {
            worst_ratio = ratio;
        }
    }
    ensure(worst_ratio >= 1.9, || {
        format!("dynamic / (3,0,0) = {worst_ratio:.3} < 1.9")
    })?;
    Ok(format!(
        "dynamic {dynamic:.0} rps = {worst_ratio:.3}x (3,0,0); >= every map (min ratio {min_ratio:.3})"
    ))
}

fn bandwidth_sharing_by_weight(s: &mut Suite) -> Check {
    // uniform weights: equal shares
    let r = s.run("sharing/uniform", bandwidth_sharing(None, &[]))?;
    let bytes: Vec<f64> = r.accelerators.iter().map(|a| a.rx_bytes as f64).collect();
    let mean = bytes.iter().sum::<f64>() / bytes.len() as f64;
    let spread = bytes
        .iter()
        .map(|b| (b / mean - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(spread <= 0.02, || {
        format!("uniform shares spread {spread:.4} > 2%")
    })?;
    ensure(r.link.rx_utilization > 0.99, || {
        format!("link not saturated: {:.3}", r.link.rx_utilization)
    })?;

    // weighted, all saturating: share / weight constant
    let w = [1u32, 1, 1, 4, 4, 4, 8, 8, 8];
    let r = s.run("sharing/weighted", bandwidth_sharing(Some(w.to_vec()), &[]))?;
    let per_weight: Vec<f64> = r
        .accelerators
        .iter()
        .zip(w)
        .map(|(a, w)| a.rx_bytes as f64 / w as f64)
        .collect();
    let mean = per_weight.iter().sum::<f64>() / per_weight.len() as f64;
    let weighted_err = per_weight
        .iter()
        .map(|b| (b / mean - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(weighted_err <= 0.02, || {
        format!("weighted shares off by {weighted_err:.4} > 2%")
    })?;

    // weight-8 accelerators compute-bound at half their weighted share
    let base = bandwidth_sharing(Some(w.to_vec()), &[]);
    let half = 0.5 * 8.0 / 39.0 * page_rate(&base);
    let cfg = bandwidth_sharing(Some(w.to_vec()), &[(6, half), (7, half), (8, half)]);
    let duration = cfg.duration_ns as f64;
    let r = s.run("sharing/compute-bound", cfg)?;
    let demand = half * duration;
    let mut demand_err: f64 = 0.0;
    for a in &r.accelerators[6..] {
        demand_err = demand_err.max((a.rx_bytes as f64 / demand - 1.0).abs());
    }
    ensure(demand_err <= 0.02, || {
        format!("compute-bound accelerators miss their demand by {demand_err:.4}")
    })?;
    let rest: Vec<f64> = r.accelerators[..6]
        .iter()
        .zip(w)
        .map(|(a, w)| a.rx_bytes as f64 / w as f64)
        .collect();
    let mean = rest.iter().sum::<f64>() / rest.len() as f64;
    let surplus_err = rest
        .iter()
        .map(|b| (b / mean - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(surplus_err <= 0.03, || {
        format!("surplus split off by {surplus_err:.4} > 3%")
    })?;
    Ok(format!(
        "uniform spread {spread:.4}, weighted error {weighted_err:.4}, demand error {demand_err:.4}, surplus error {surplus_err:.4}"
    ))
}

fn parallelism_staircase(s: &mut Suite) -> Check {
    let service = 1_000_000.0;
    let mut delays = Vec::new();
    for n in 1..=9u32 {
        let r = s.run(&format!("staircase n={n}"), staircase(n))?;
        ensure(r.apps[0].completed == n as u64, || {
            format!("n={n}: not all requests finished")
        })?;
        let max = r.apps[0].latency.max_ns as f64;
        let expected = n.div_ceil(3) as f64 * service;
        ensure(within(max, expected, 0.05), || {
            format!("n={n}: max delay {max} ns, expected {expected} ns")
        })?;
        delays.push(max);
    }
    for n in 1..3 {
        ensure(within(delays[n], delays[0], 0.05), || {
            format!(
                "n={} delay {} differs from n=1 delay {}",
                n + 1,
                delays[n],
                delays[0]
            )
        })?;
    }
    let jump = delays[3] - delays[2];
    ensure(within(jump, service, 0.05), || {
        format!("n=3 -> 4 jump {jump} ns, expected ~{service}")
    })?;
    Ok(format!(
        "max delay (ms) for n=1..9: {}",
        delays
            .iter()
            .map(|d| format!("{:.3}", d / 1e6))
            .collect::<Vec<_>>()
            .join(" ")
    ))
}

fn equal_sharing_across_apps(s: &mut Suite) -> Check {
    let cfg = equal_sharing();
    let sizes: Vec<f64> = cfg
        .apps
        .iter()
        .map(|a| a.frame_bytes_in.unwrap() as f64)
        .collect();
    let r = s.run("equal-sharing", cfg)?;
    let busy: Vec<f64> = r.apps.iter().map(|a| a.attributed_busy_ns as f64).collect();
    let mean = busy.iter().sum::<f64>() / 3.0;
    let busy_err = busy
        .iter()
        .map(|b| (b / mean - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(busy_err <= 0.05, || {
        format!("attributed busy spread {busy_err:.4} > 5%")
    })?;
    // throughput x size should be constant
    let work: Vec<f64> = r
        .apps
        .iter()
        .zip(&sizes)
        .map(|(a, s)| a.throughput_rps * s)
        .collect();
    let mean = work.iter().sum::<f64>() / 3.0;
    let tput_err = work
        .iter()
        .map(|w| (w / mean - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(tput_err <= 0.10, || {
        format!("throughput not inverse to size: {tput_err:.4}")
    })?;
    Ok(format!(
        "busy spread {busy_err:.4}, throughput x size spread {tput_err:.4}, rps {:?}",
        r.apps
            .iter()
            .map(|a| a.throughput_rps.round())
            .collect::<Vec<_>>()
    ))
}

/// Cyclic scan from the cursor; the lowest-index idle member of the first
/// servable queue wins.
fn reference_step(
    idle: &mut [bool],
    table: &[Vec<bool>],
    queues: &mut [VecDeque<u64>],
    cursor: &mut usize,
) -> Option<(usize, u64, usize)> {
    let t = queues.len();
    for step in 0..t {
        let q = (*cursor + step) % t;
        if queues[q].is_empty() {
            continue;
        }
        for acc in 0..idle.len() {
            if idle[acc] && table[q][acc] {
                idle[acc] = false;
                let id = queues[q].pop_front().unwrap();
                *cursor = (q + 1) % t;
                return Some((q, id, acc));
            }
        }
    }
    None
}

fn command(id: u64) -> Command {
    Command {
        command_id: id,
        core_id: 0,
        acc_type: 0,
        rx_lists: vec![],
        tx_lists: vec![],
        submit_time: SimTime::ZERO,
    }
}

fn allocator_oracle(_: &mut Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA110C);
    let mut steps = 0usize;
    for instance in 0..10_000 {
        let t = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=8);
        let table: Vec<Vec<bool>> = (0..t)
            .map(|_| (0..k).map(|_| rng.gen()).collect())
            .collect();
        let mut idle: Vec<bool> = (0..k).map(|_| rng.gen()).collect();
        let mut ref_queues: Vec<VecDeque<u64>> = Vec::new();
        let mut queues = Vec::new();
        let mut next = 0;
        for g in 0..t {
            let depth = rng.gen_range(0..=5);
            let mut q = CommandQueue::new(g, 5);
            let mut r = VecDeque::new();
            for _ in 0..depth {
                q.enqueue(command(next)).unwrap();
                r.push_back(next);
                next += 1;
            }
            queues.push(q);
            ref_queues.push(r);
        }
        let mut ref_cursor = rng.gen_range(0..t);
        let mut cursor = ref_cursor;
        let gt = GroupTable::from_matrix(k, &table).map_err(|e| e.to_string())?;
        let mut status = AcceleratorStatus::from_bools(&idle);
        loop {
            let got = allocate_step(&mut status, &gt, &mut queues, &mut cursor)
                .map(|a| (a.queue, a.command.command_id, a.acc));
            let want = reference_step(&mut idle, &table, &mut ref_queues, &mut ref_cursor);
            ensure(got == want && cursor == ref_cursor, || {
                format!("instance {instance}: got {got:?} cursor {cursor}, want {want:?} cursor {ref_cursor}")
            })?;
            steps += 1;
            if got.is_none() {
                break;
            }
            // free a random accelerator now and then so queues keep draining
            if rng.gen_bool(0.3) {
                let a = rng.gen_range(0..k);
                idle[a] = true;
                status.set_idle(a);
            }
        }
        let busy_match = (0..k).all(|a| status.is_idle(a) == idle[a]);
        ensure(busy_match, || {
            format!("instance {instance}: status diverged")
        })?;
    }
    Ok(format!("10000 instances, {steps} steps, 0 mismatches"))
}

fn scheduler_exactness(_: &mut Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5C4ED);
    for case in 0..1_000 {
        let k = rng.gen_range(1..=16);
        let w: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=255)).collect();
        let total: u32 = w.iter().sum();
        let mut s = WeightedScheduler::new(PriorityTable::new(&w).map_err(|e| e.to_string())?);
        let pending = vec![true; k];
        // the grant sequence has period `total`, so any window of that
        // length is one full cycle
        for _ in 0..rng.gen_range(0..total) {
            s.schedule_step(&pending);
        }
        let mut counts = vec![0u32; k];
        for _ in 0..total {
            counts[s
                .schedule_step(&pending)
                .ok_or("no grant with all pending")?] += 1;
        }
        ensure(counts == w, || {
            format!("case {case}: weights {w:?}, grants {counts:?}")
        })?;
    }
    Ok("1000 weight vectors, 0 mismatches".into())
}

fn random_sg(rng: &mut ChaCha8Rng) -> (u32, Vec<SgElement>) {
    let page = [512u32, 4096, 8192][rng.gen_range(0..3)];
    let n = rng.gen_range(1..=64);
    let els = (0..n)
        .map(|i| {
            let length = if i == 0 || i + 1 == n {
                rng.gen_range(1..=page)
            } else {
                page
            };
            SgElement::new(rng.gen(), length)
        })
        .collect();
    (page, els)
}

fn structural_invariants(s: &mut Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x56);
    for i in 0..1_000 {
        let (page, els) = random_sg(&mut rng);
        let list = compact_sg(&els, page).map_err(|e| format!("list {i}: {e}"))?;
        let back = decode_sg(&list).map_err(|e| format!("list {i}: {e}"))?;
        ensure(back == els, || format!("list {i} did not round trip"))?;
    }
    let scenarios = std::mem::take(&mut s.scenarios);
    for (label, cfg) in &scenarios {
        // a buffer-bound violation aborts the run with an error
        let a = run_traced(cfg);
        check_invariants(&a).map_err(|e| format!("{label}: {e}"))?;
        let b = run_traced(cfg);
        ensure(a == b, || format!("{label}: second run differs"))?;
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        ensure(ja == jb, || format!("{label}: serialized reports differ"))?;
    }
    Ok(format!(
        "1000 SG lists round trip; {} scenarios: conservation, busy+idle, bounds, determinism",
        scenarios.len()
    ))
}

fn main() -> ExitCode {
    let mut s = Suite {
        failed: 0,
        scenarios: Vec::new(),
    };
    let secs = Duration::from_secs;
    s.criterion(1, "idle-time removal", secs(10), idle_time_removal);
    s.criterion(
        2,
        "dynamic vs static",
        secs(5),
        dynamic_vs_static_allocation,
    );
    s.criterion(
        3,
        "weighted bandwidth sharing",
        secs(10),
        bandwidth_sharing_by_weight,
    );
    s.criterion(4, "parallelism staircase", secs(5), parallelism_staircase);
    s.criterion(
        5,
        "equal sharing across apps",
        secs(10),
        equal_sharing_across_apps,
    );
    s.criterion(6, "allocator oracle", secs(5), allocator_oracle);
    s.criterion(7, "scheduler exactness", secs(5), scheduler_exactness);
    // reruns every scenario above twice with traces on; no runtime bound stated
    s.criterion(8, "structural invariants", secs(600), structural_invariants);
    if s.failed == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 8 criteria failed", s.failed);
        ExitCode::FAILURE
    }
}
