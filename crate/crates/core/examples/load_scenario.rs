//! Loads a scenario file, optionally overrides the mode, and prints the
//! summary report.
//!
//!     cargo run --release --example load_scenario -- scenarios/regroup.toml [single-queue]

use ultrashare::{emit_report, parse_config, run_scenario, ControllerMode, ReportFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| "scenarios/regroup.toml".into());
    let mut cfg = parse_config(&path)?;
    if let Some(mode) = args.next() {
        cfg.mode = mode.parse::<ControllerMode>()?;
    }
    let report = run_scenario(&cfg)?;
    print!("{}", emit_report(&report, ReportFormat::Summary));
    Ok(())
}
