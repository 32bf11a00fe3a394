//! The per-direction weighted round-robin scheduler, first on its own and
//! then sharing a saturated 4 B/ns link between nine accelerators.
//!
//!     cargo run --release --example weighted_link

use ultrashare::presets::{bandwidth_sharing, page_rate};
use ultrashare::{run_scenario, PriorityTable, WeightedScheduler};

fn main() {
    let mut s = WeightedScheduler::new(PriorityTable::new(&[2, 1, 3]).unwrap());
    let grants: Vec<_> = (0..12)
        .map(|_| s.schedule_step(&[true; 3]).unwrap())
        .collect();
    println!("weights [2, 1, 3], everyone pending: {grants:?}");
    let grants: Vec<_> = (0..6)
        .map(|_| s.schedule_step(&[true, true, false]).unwrap())
        .collect();
    println!("accelerator 2 idle, its turns are skipped: {grants:?}");

    let weights = vec![1, 1, 1, 4, 4, 4, 8, 8, 8];
    let base = bandwidth_sharing(Some(weights.clone()), &[]);
    let half = 0.5 * 8.0 / 39.0 * page_rate(&base);
    for (label, cfg) in [
        ("uniform weights", bandwidth_sharing(None, &[])),
        ("weights 1,1,1,4,4,4,8,8,8", base.clone()),
        (
            "same weights, last three compute-bound",
            bandwidth_sharing(Some(weights), &[(6, half), (7, half), (8, half)]),
        ),
    ] {
        let r = run_scenario(&cfg).unwrap();
        let shares: Vec<String> = r
            .accelerators
            .iter()
            .map(|a| format!("{:.3}", a.rx_traffic_fraction))
            .collect();
        println!(
            "\n{label}\n  rx fraction per accelerator: {}\n  link busy {:.1}%",
            shares.join(" "),
            r.link.rx_utilization * 100.0
        );
    }
}
