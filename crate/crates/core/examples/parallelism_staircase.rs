//! End-to-end delay of n simultaneous requests on three accelerators.
//!
//!     cargo run --release --example parallelism_staircase

use ultrashare::presets::staircase;
use ultrashare::run_scenario;

fn main() {
    println!("{:>2}  {:>12}  {:>12}", "n", "max delay", "mean delay");
    for n in 1..=9 {
        let r = run_scenario(&staircase(n)).unwrap();
        let l = &r.apps[0].latency;
        println!(
            "{n:>2}  {:>9.3} ms  {:>9.3} ms  {}",
            l.max_ns as f64 / 1e6,
            l.mean_ns / 1e6,
            "#".repeat((l.max_ns / 250_000) as usize)
        );
    }
}
