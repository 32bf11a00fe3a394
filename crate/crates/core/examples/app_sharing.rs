//! Three apps with 1x, 4x and 16x frames share three accelerators.
//!
//!     cargo run --release --example app_sharing

use ultrashare::presets::equal_sharing;
use ultrashare::run_scenario;

fn main() {
    let cfg = equal_sharing();
    let r = run_scenario(&cfg).unwrap();
    let total: u64 = r.apps.iter().map(|a| a.attributed_busy_ns).sum();
    for (a, spec) in r.apps.iter().zip(&cfg.apps) {
        println!(
            "app {} ({:>7} B frames): {:>6.0} frames/s, {:>5.1}% of accelerator time, p99 {:.2} ms",
            a.app_id,
            spec.frame_bytes_in.unwrap(),
            a.throughput_rps,
            a.attributed_busy_ns as f64 / total as f64 * 100.0,
            a.latency.p99_ns as f64 / 1e6
        );
    }
}
