//! Three accelerator types with 100/400/800 us service times behind one
//! shared FIFO versus one queue per type.
//!
//!     cargo run --release --example head_of_line

use ultrashare::presets::mixed_service_times;
use ultrashare::{run_scenario, ControllerMode};

fn main() {
    let single = run_scenario(&mixed_service_times(ControllerMode::SingleQueue)).unwrap();
    let multi = run_scenario(&mixed_service_times(ControllerMode::Ultrashare)).unwrap();
    println!(
        "{:<8} {:>14} {:>14} {:>8}",
        "type", "single-queue", "per-type", "gain"
    );
    for (t, name) in ["fast", "medium", "slow"].iter().enumerate() {
        let s = single.type_throughput_rps(t as u32);
        let m = multi.type_throughput_rps(t as u32);
        println!("{name:<8} {s:>10.0} rps {m:>10.0} rps {:>7.2}x", m / s);
    }
    let util = |r: &ultrashare::MetricsReport, t: u32| {
        let accs: Vec<_> = r.accelerators.iter().filter(|a| a.acc_type == t).collect();
        accs.iter().map(|a| a.busy_ns as f64).sum::<f64>()
            / (accs.len() as f64 * r.duration_ns as f64)
    };
    println!(
        "\nfast accelerators busy: {:.0}% with one FIFO, {:.0}% with per-type queues",
        util(&single, 0) * 100.0,
        util(&multi, 0) * 100.0
    );
}
