//! Dumps a run's event trace as JSON lines and rebuilds the report from it.
//!
//!     cargo run --example trace_replay [-- out.jsonl]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};

use ultrashare::metrics::{read_trace, write_trace};
use ultrashare::presets::staircase;
use ultrashare::{replay, run_scenario_with, RunOptions};

fn main() -> Result<(), ultrashare::Error> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("ultrashare-trace.jsonl"));
    let mut report = run_scenario_with(&staircase(4), RunOptions { keep_trace: true })?;
    let trace = report.trace.take().unwrap();
    write_trace(&trace, BufWriter::new(File::create(&path)?))?;

    let mut kinds = BTreeMap::new();
    for r in &trace {
        *kinds.entry(r.event.kind()).or_insert(0) += 1;
    }
    println!("{} records written to {}", trace.len(), path.display());
    for (k, n) in kinds {
        println!("  {k:<20} {n}");
    }

    let back = read_trace(BufReader::new(File::open(&path)?))?;
    assert_eq!(replay(&back), report);
    println!("replayed report matches the live one");
    Ok(())
}
