#![allow(dead_code)]

use std::collections::BTreeMap;

use ultrashare::{
    run_scenario_with, Direction, MetricsReport, RunOptions, ScenarioConfig, TraceEvent,
};

/// Runs with the trace kept.
pub fn run_traced(cfg: &ScenarioConfig) -> MetricsReport {
    run_scenario_with(cfg, RunOptions { keep_trace: true }).expect("run succeeds")
}

#[derive(Default, Debug)]
struct Bytes {
    rx_expected: u64,
    tx_expected: u64,
    rx_moved: u64,
    tx_moved: u64,
    completed: bool,
}

/// Checks per-command byte conservation against the trace and the report's
/// per-accelerator invariants. Returns a description of the first problem.
pub fn check_invariants(report: &MetricsReport) -> Result<(), String> {
    let trace = report.trace.as_ref().ok_or("report has no trace")?;
    let mut cmds: BTreeMap<u64, Bytes> = BTreeMap::new();
    for rec in trace {
        match &rec.event {
            TraceEvent::CommandArrival {
                command_id,
                rx_bytes,
                tx_bytes,
                ..
            } => {
                cmds.insert(
                    *command_id,
                    Bytes {
                        rx_expected: *rx_bytes,
                        tx_expected: *tx_bytes,
                        ..Default::default()
                    },
                );
            }
            TraceEvent::DataChunkComplete {
                direction,
                command_id,
                bytes,
                ..
            } => {
                let c = cmds
                    .get_mut(command_id)
                    .ok_or("bytes for unknown command")?;
                match direction {
                    Direction::Rx => c.rx_moved += *bytes as u64,
                    Direction::Tx => c.tx_moved += *bytes as u64,
                }
            }
            TraceEvent::CommandComplete { command_id, .. } => {
                cmds.get_mut(command_id)
                    .ok_or("unknown completion")?
                    .completed = true;
            }
            _ => {}
        }
    }
    let (mut rx_total, mut tx_total) = (0, 0);
    for (id, c) in &cmds {
        if c.completed && (c.rx_moved != c.rx_expected || c.tx_moved != c.tx_expected) {
            return Err(format!(
                "command {id}: moved {}/{} rx, {}/{} tx",
                c.rx_moved, c.rx_expected, c.tx_moved, c.tx_expected
            ));
        }
        if c.rx_moved > c.rx_expected || c.tx_moved > c.tx_expected {
            return Err(format!("command {id} moved more bytes than it carries"));
        }
        rx_total += c.rx_moved;
        tx_total += c.tx_moved;
    }
    if rx_total != report.link.rx_bytes || tx_total != report.link.tx_bytes {
        return Err("link byte totals disagree with per-command sums".into());
    }
    let completed_rx: u64 = cmds
        .values()
        .filter(|c| c.completed)
        .map(|c| c.rx_expected)
        .sum();
    let partial_rx: u64 = cmds
        .values()
        .filter(|c| !c.completed)
        .map(|c| c.rx_moved)
        .sum();
    if completed_rx + partial_rx != report.link.rx_bytes {
        return Err("rx bytes != completed commands + in-flight remainder".into());
    }
    for a in &report.accelerators {
        if a.busy_ns + a.idle_ns != report.duration_ns {
            return Err(format!("acc {}: busy + idle != duration", a.index));
        }
    }
    let acc_busy: u64 = report.accelerators.iter().map(|a| a.busy_ns).sum();
    let app_busy: u64 = report.apps.iter().map(|a| a.attributed_busy_ns).sum();
    if acc_busy != app_busy {
        return Err(format!(
            "attributed busy {app_busy} != accelerator busy {acc_busy}"
        ));
    }
    let rx_share: f64 = report.accelerators.iter().map(|a| a.rx_link_share).sum();
    let tx_share: f64 = report.accelerators.iter().map(|a| a.tx_link_share).sum();
    if rx_share > 1.0 + 1e-9 || tx_share > 1.0 + 1e-9 {
        return Err(format!(
            "link shares exceed capacity: rx {rx_share}, tx {tx_share}"
        ));
    }
    Ok(())
}

/// `|a - b| <= tol * |b|`
pub fn within(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}
