//! Three threads and two identical accelerators: every fixed
//! thread-to-accelerator map against dynamic allocation.
//!
//!     cargo run --release --example dynamic_vs_static

use ultrashare::presets::{dynamic_vs_static, static_maps};
use ultrashare::run_scenario;

fn main() {
    let dynamic = run_scenario(&dynamic_vs_static(None))
        .unwrap()
        .throughput_rps();
    println!("dynamic: {dynamic:.0} frames/s");
    for m in static_maps() {
        let load = [
            m.iter().filter(|a| **a == 0).count(),
            m.iter().filter(|a| **a == 1).count(),
        ];
        let r = run_scenario(&dynamic_vs_static(Some(m)))
            .unwrap()
            .throughput_rps();
        println!(
            "static {m:?} (load {}/{}): {r:.0} frames/s, dynamic is {:.2}x",
            load[0],
            load[1],
            dynamic / r
        );
    }
}
