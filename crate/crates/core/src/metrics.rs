//! Trace records, the metrics collector, and report output.
//!
//! The engine reports everything it does as [`TraceRecord`]s and the
//! [`Recorder`] builds the [`MetricsReport`] from those records alone, so
//! replaying a dumped trace reproduces the report exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::link::Direction;
use crate::sim::SimTime;
use crate::workload::ControllerMode;

/// One line of the trace dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: SimTime,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    RunStart {
        mode: ControllerMode,
        seed: u64,
        acc_types: Vec<u32>,
        apps: Vec<u32>,
        queues: usize,
        rx_bandwidth: f64,
        tx_bandwidth: f64,
    },
    CommandArrival {
        command_id: u64,
        app_id: usize,
        core_id: u32,
        acc_type: u32,
        rx_bytes: u64,
        tx_bytes: u64,
    },
    CommandEnqueued {
        command_id: u64,
        queue: usize,
        depth: usize,
    },
    /// Queue full; the submitting thread waits for a free slot.
    CommandBlocked {
        command_id: u64,
        queue: usize,
    },
    CommandRejected {
        command_id: u64,
        app_id: usize,
        reason: String,
    },
    Allocated {
        command_id: u64,
        queue: usize,
        acc: usize,
    },
    SgFetchComplete {
        command_id: u64,
        acc: usize,
        rx_elements: usize,
        tx_elements: usize,
    },
    DataChunkStart {
        direction: Direction,
        acc: usize,
        command_id: u64,
        bytes: u32,
    },
    DataChunkComplete {
        direction: Direction,
        acc: usize,
        command_id: u64,
        bytes: u32,
    },
    ComputeComplete {
        acc: usize,
        command_id: u64,
        consumed: u64,
        produced: u64,
        span_ns: f64,
        stall_ns: f64,
    },
    CommandComplete {
        command_id: u64,
        acc: usize,
    },
    SchedulerWakeup {
        action: String,
    },
    RunEnd {
        duration_ns: u64,
    },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::RunStart { .. } => "run_start",
            TraceEvent::CommandArrival { .. } => "command_arrival",
            TraceEvent::CommandEnqueued { .. } => "command_enqueued",
            TraceEvent::CommandBlocked { .. } => "command_blocked",
            TraceEvent::CommandRejected { .. } => "command_rejected",
            TraceEvent::Allocated { .. } => "allocated",
            TraceEvent::SgFetchComplete { .. } => "sg_fetch_complete",
            TraceEvent::DataChunkStart { .. } => "data_chunk_start",
            TraceEvent::DataChunkComplete { .. } => "data_chunk_complete",
            TraceEvent::ComputeComplete { .. } => "compute_complete",
            TraceEvent::CommandComplete { .. } => "command_complete",
            TraceEvent::SchedulerWakeup { .. } => "scheduler_wakeup",
            TraceEvent::RunEnd { .. } => "run_end",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p95_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

impl LatencyStats {
    /// Exact nearest-rank percentiles.
    pub fn from_samples(mut samples: Vec<u64>) -> Self {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        let rank = |q: f64| samples[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        LatencyStats {
            count: n as u64,
            mean_ns: samples.iter().map(|s| *s as f64).sum::<f64>() / n as f64,
            p50_ns: rank(0.50),
            p95_ns: rank(0.95),
            p99_ns: rank(0.99),
            max_ns: samples[n - 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccMetrics {
    pub index: usize,
    pub acc_type: u32,
    pub completed: u64,
    pub busy_ns: u64,
    pub idle_ns: u64,
    pub rx_bytes: u64,
    pub tx_bytes: u64,
    /// Bytes moved over bandwidth x duration, per direction.
    pub rx_link_share: f64,
    pub tx_link_share: f64,
    /// Fraction of all bytes moved in that direction.
    pub rx_traffic_fraction: f64,
    pub tx_traffic_fraction: f64,
    pub compute_span_ns: f64,
    pub compute_stall_ns: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AppMetrics {
    pub app_id: usize,
    pub acc_type: u32,
    pub submitted: u64,
    pub completed: u64,
    pub rejected: u64,
    /// Submitted but not finished when the run ended.
    pub incomplete: u64,
    pub throughput_rps: f64,
    pub latency: LatencyStats,
    /// Accelerator occupancy spent on this app's commands.
    pub attributed_busy_ns: u64,
    pub max_outstanding_seen: u64,
    pub rx_bytes: u64,
    pub tx_bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueMetrics {
    pub index: usize,
    pub enqueued: u64,
    pub max_depth: usize,
    pub total_wait_ns: u64,
    /// Commands still waiting when the run ended.
    pub waiting_at_end: u64,
    pub blocked_submissions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub rx_bytes: u64,
    pub tx_bytes: u64,
    pub rx_utilization: f64,
    pub tx_utilization: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: ControllerMode,
    pub seed: u64,
    pub duration_ns: u64,
    pub accelerators: Vec<AccMetrics>,
    pub apps: Vec<AppMetrics>,
    pub queues: Vec<QueueMetrics>,
    pub link: LinkMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

impl MetricsReport {
    pub fn total_completed(&self) -> u64 {
        self.apps.iter().map(|a| a.completed).sum()
    }

    pub fn throughput_rps(&self) -> f64 {
        self.apps.iter().map(|a| a.throughput_rps).sum()
    }

    /// Completed requests per second for one accelerator type.
    pub fn type_throughput_rps(&self, acc_type: u32) -> f64 {
        let secs = self.duration_ns as f64 * 1e-9;
        let n: u64 = self
            .accelerators
            .iter()
            .filter(|a| a.acc_type == acc_type)
            .map(|a| a.completed)
            .sum();
        n as f64 / secs
    }
}

#[derive(Debug, Clone)]
struct CommandTrack {
    app: usize,
    submit: SimTime,
    rx_bytes: u64,
    tx_bytes: u64,
    queue: Option<(usize, SimTime)>,
    acc: Option<(usize, SimTime)>,
}

/// Folds trace records into a [`MetricsReport`].
#[derive(Debug, Default)]
pub struct Recorder {
    mode: ControllerMode,
    seed: u64,
    rx_bandwidth: f64,
    tx_bandwidth: f64,
    accs: Vec<AccMetrics>,
    apps: Vec<AppMetrics>,
    queues: Vec<QueueMetrics>,
    depth: Vec<usize>,
    latencies: Vec<Vec<u64>>,
    outstanding: Vec<u64>,
    commands: BTreeMap<u64, CommandTrack>,
    link_busy_since: [Option<SimTime>; 2],
    link_busy_ns: [u64; 2],
    end: Option<SimTime>,
}

fn dir_index(d: Direction) -> usize {
    match d {
        Direction::Rx => 0,
        Direction::Tx => 1,
    }
}

impl Recorder {
    pub fn new() -> Self {
        Recorder::default()
    }

    pub fn record_event(&mut self, rec: &TraceRecord) {
        let now = rec.time;
        match &rec.event {
            TraceEvent::RunStart {
                mode,
                seed,
                acc_types,
                apps,
                queues,
                rx_bandwidth,
                tx_bandwidth,
            } => {
                self.mode = *mode;
                self.seed = *seed;
                self.rx_bandwidth = *rx_bandwidth;
                self.tx_bandwidth = *tx_bandwidth;
                self.accs = acc_types
                    .iter()
                    .enumerate()
                    .map(|(index, t)| AccMetrics {
                        index,
                        acc_type: *t,
                        ..Default::default()
                    })
                    .collect();
                self.apps = apps
                    .iter()
                    .enumerate()
                    .map(|(app_id, t)| AppMetrics {
                        app_id,
                        acc_type: *t,
                        ..Default::default()
                    })
                    .collect();
                self.queues = (0..*queues)
                    .map(|index| QueueMetrics {
                        index,
                        ..Default::default()
                    })
                    .collect();
                self.depth = vec![0; *queues];
                self.latencies = vec![Vec::new(); apps.len()];
                self.outstanding = vec![0; apps.len()];
            }
            TraceEvent::CommandArrival {
                command_id,
                app_id,
                rx_bytes,
                tx_bytes,
                ..
            } => {
                self.apps[*app_id].submitted += 1;
                self.outstanding[*app_id] += 1;
                let o = self.outstanding[*app_id];
                let app = &mut self.apps[*app_id];
                app.max_outstanding_seen = app.max_outstanding_seen.max(o);
                self.commands.insert(
                    *command_id,
                    CommandTrack {
                        app: *app_id,
                        submit: now,
                        rx_bytes: *rx_bytes,
                        tx_bytes: *tx_bytes,
                        queue: None,
                        acc: None,
                    },
                );
            }
            TraceEvent::CommandEnqueued {
                command_id,
                queue,
                depth,
            } => {
                let q = &mut self.queues[*queue];
                q.enqueued += 1;
                q.max_depth = q.max_depth.max(*depth);
                self.depth[*queue] = *depth;
                if let Some(c) = self.commands.get_mut(command_id) {
                    c.queue = Some((*queue, now));
                }
            }
            TraceEvent::CommandBlocked { queue, .. } => {
                self.queues[*queue].blocked_submissions += 1;
            }
            TraceEvent::CommandRejected {
                command_id, app_id, ..
            } => {
                self.apps[*app_id].rejected += 1;
                self.outstanding[*app_id] -= 1;
                self.commands.remove(command_id);
            }
            TraceEvent::Allocated {
                command_id,
                queue,
                acc,
            } => {
                self.depth[*queue] = self.depth[*queue].saturating_sub(1);
                if let Some(c) = self.commands.get_mut(command_id) {
                    if let Some((_, since)) = c.queue.take() {
                        self.queues[*queue].total_wait_ns += now - since;
                    }
                    c.acc = Some((*acc, now));
                }
            }
            TraceEvent::SgFetchComplete { .. } => {}
            TraceEvent::DataChunkStart { direction, .. } => {
                self.link_busy_since[dir_index(*direction)] = Some(now);
            }
            TraceEvent::DataChunkComplete {
                direction,
                acc,
                command_id,
                bytes,
            } => {
                let d = dir_index(*direction);
                if let Some(since) = self.link_busy_since[d].take() {
                    self.link_busy_ns[d] += now - since;
                }
                let app = self.commands.get(command_id).map(|c| c.app);
                let b = *bytes as u64;
                match direction {
                    Direction::Rx => {
                        self.accs[*acc].rx_bytes += b;
                        if let Some(a) = app {
                            self.apps[a].rx_bytes += b;
                        }
                    }
                    Direction::Tx => {
                        self.accs[*acc].tx_bytes += b;
                        if let Some(a) = app {
                            self.apps[a].tx_bytes += b;
                        }
                    }
                }
            }
            TraceEvent::ComputeComplete {
                acc,
                span_ns,
                stall_ns,
                ..
            } => {
                self.accs[*acc].compute_span_ns += span_ns;
                self.accs[*acc].compute_stall_ns += stall_ns;
            }
            TraceEvent::CommandComplete { command_id, acc } => {
                if let Some(c) = self.commands.remove(command_id) {
                    let busy = c.acc.map_or(0, |(_, since)| now - since);
                    self.accs[*acc].completed += 1;
                    self.accs[*acc].busy_ns += busy;
                    let app = &mut self.apps[c.app];
                    app.completed += 1;
                    app.attributed_busy_ns += busy;
                    self.latencies[c.app].push(now - c.submit);
                    self.outstanding[c.app] -= 1;
                }
            }
            TraceEvent::SchedulerWakeup { .. } => {}
            TraceEvent::RunEnd { .. } => {
                self.end = Some(now);
            }
        }
    }

    /// Closes open intervals at the end of the run and builds the report.
    pub fn finish(mut self) -> MetricsReport {
        let end = self.end.unwrap_or_default();
        let duration = end.as_ns();
        for c in self.commands.values() {
            self.apps[c.app].incomplete += 1;
            if let Some((acc, since)) = c.acc {
                let busy = end - since;
                self.accs[acc].busy_ns += busy;
                self.apps[c.app].attributed_busy_ns += busy;
            }
            if let Some((q, since)) = c.queue {
                self.queues[q].total_wait_ns += end - since;
                self.queues[q].waiting_at_end += 1;
            }
        }
        for d in 0..2 {
            if let Some(since) = self.link_busy_since[d].take() {
                self.link_busy_ns[d] += end - since;
            }
        }
        let rx_total: u64 = self.accs.iter().map(|a| a.rx_bytes).sum();
        let tx_total: u64 = self.accs.iter().map(|a| a.tx_bytes).sum();
        let secs = duration as f64 * 1e-9;
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        for a in &mut self.accs {
            a.idle_ns = duration - a.busy_ns;
            a.rx_link_share = ratio(a.rx_bytes as f64, self.rx_bandwidth * duration as f64);
            a.tx_link_share = ratio(a.tx_bytes as f64, self.tx_bandwidth * duration as f64);
            a.rx_traffic_fraction = ratio(a.rx_bytes as f64, rx_total as f64);
            a.tx_traffic_fraction = ratio(a.tx_bytes as f64, tx_total as f64);
        }
        for (app, lat) in self
            .apps
            .iter_mut()
            .zip(std::mem::take(&mut self.latencies))
        {
            app.throughput_rps = ratio(app.completed as f64, secs);
            app.latency = LatencyStats::from_samples(lat);
        }
        MetricsReport {
            mode: self.mode,
            seed: self.seed,
            duration_ns: duration,
            accelerators: self.accs,
            apps: self.apps,
            queues: self.queues,
            link: LinkMetrics {
                rx_bytes: rx_total,
                tx_bytes: tx_total,
                rx_utilization: ratio(self.link_busy_ns[0] as f64, duration as f64),
                tx_utilization: ratio(self.link_busy_ns[1] as f64, duration as f64),
            },
            trace: None,
        }
    }

    /// Bytes of commands that were not complete at the end of the run but
    /// had been submitted: (rx, tx).
    pub fn incomplete_totals(&self) -> (u64, u64) {
        self.commands
            .values()
            .fold((0, 0), |(r, t), c| (r + c.rx_bytes, t + c.tx_bytes))
    }
}

/// Rebuilds a report from trace records.
pub fn replay<'a>(records: impl IntoIterator<Item = &'a TraceRecord>) -> MetricsReport {
    let mut rec = Recorder::new();
    for r in records {
        rec.record_event(r);
    }
    rec.finish()
}

pub fn write_trace(records: &[TraceRecord], mut out: impl Write) -> Result<(), Error> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Trace(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace(input: impl BufRead) -> Result<Vec<TraceRecord>, Error> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Trace(format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Summary,
    Structured,
    TableRows,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "summary" | "summary-text" => Ok(ReportFormat::Summary),
            "structured" | "json" => Ok(ReportFormat::Structured),
            "table-rows" | "csv" => Ok(ReportFormat::TableRows),
            other => Err(format!(
                "unknown format `{other}` (expected summary, structured or table-rows)"
            )),
        }
    }
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Summary => summary_text(report),
        ReportFormat::Structured => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
        ReportFormat::TableRows => {
            let mut s = String::from(TABLE_HEADER);
            s.push('\n');
            for row in table_rows(report, None) {
                s.push_str(&row);
                s.push('\n');
            }
            s
        }
    }
}

pub fn parse_structured(text: &str) -> Result<MetricsReport, Error> {
    serde_json::from_str(text).map_err(|e| Error::Trace(e.to_string()))
}

pub const TABLE_HEADER: &str = "sample,record,index,acc_type,completed,throughput_rps,\
mean_latency_ns,p50_latency_ns,p95_latency_ns,p99_latency_ns,max_latency_ns,busy_ns,\
rx_bytes,tx_bytes,rx_link_share,tx_link_share";

/// One CSV line per app and per accelerator. `sample` labels the run (for
/// sweeps); it is empty for a single run.
pub fn table_rows(report: &MetricsReport, sample: Option<&str>) -> Vec<String> {
    let tag = sample.unwrap_or("");
    let mut rows = Vec::new();
    for a in &report.apps {
        rows.push(format!(
            "{tag},app,{},{},{},{},{},{},{},{},{},{},{},{},,",
            a.app_id,
            a.acc_type,
            a.completed,
            a.throughput_rps,
            a.latency.mean_ns,
            a.latency.p50_ns,
            a.latency.p95_ns,
            a.latency.p99_ns,
            a.latency.max_ns,
            a.attributed_busy_ns,
            a.rx_bytes,
            a.tx_bytes,
        ));
    }
    let secs = report.duration_ns as f64 * 1e-9;
    for a in &report.accelerators {
        let tput = if secs > 0.0 {
            a.completed as f64 / secs
        } else {
            0.0
        };
        rows.push(format!(
            "{tag},acc,{},{},{},{},,,,,,{},{},{},{},{}",
            a.index,
            a.acc_type,
            a.completed,
            tput,
            a.busy_ns,
            a.rx_bytes,
            a.tx_bytes,
            a.rx_link_share,
            a.tx_link_share,
        ));
    }
    rows
}

fn summary_text(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "mode {}  seed {}  simulated {:.3} ms",
        r.mode,
        r.seed,
        r.duration_ns as f64 / 1e6
    );
    let _ = writeln!(
        s,
        "link: rx {} B ({:.1}% busy)  tx {} B ({:.1}% busy)",
        r.link.rx_bytes,
        r.link.rx_utilization * 100.0,
        r.link.tx_bytes,
        r.link.tx_utilization * 100.0
    );
    let _ = writeln!(s, "\napplications:");
    let _ = writeln!(
        s,
        "  {:>3} {:>4} {:>9} {:>9} {:>12} {:>12} {:>12} {:>12}",
        "app", "type", "done", "incompl", "req/s", "mean ms", "p99 ms", "busy ms"
    );
    for a in &r.apps {
        let _ = writeln!(
            s,
            "  {:>3} {:>4} {:>9} {:>9} {:>12.1} {:>12.4} {:>12.4} {:>12.3}",
            a.app_id,
            a.acc_type,
            a.completed,
            a.incomplete,
            a.throughput_rps,
            a.latency.mean_ns / 1e6,
            a.latency.p99_ns as f64 / 1e6,
            a.attributed_busy_ns as f64 / 1e6
        );
    }
    let _ = writeln!(s, "\naccelerators:");
    let _ = writeln!(
        s,
        "  {:>3} {:>4} {:>7} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "acc", "type", "done", "util %", "rx share", "tx share", "rx frac", "tx frac"
    );
    for a in &r.accelerators {
        let util = if r.duration_ns > 0 {
            a.busy_ns as f64 / r.duration_ns as f64 * 100.0
        } else {
            0.0
        };
        let _ = writeln!(
            s,
            "  {:>3} {:>4} {:>7} {:>8.1} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            a.index,
            a.acc_type,
            a.completed,
            util,
            a.rx_link_share,
            a.tx_link_share,
            a.rx_traffic_fraction,
            a.tx_traffic_fraction
        );
    }
    let _ = writeln!(s, "\nqueues:");
    for q in &r.queues {
        let _ = writeln!(
            s,
            "  queue {}: enqueued {}  max depth {}  wait {:.3} ms  waiting at end {}",
            q.index,
            q.enqueued,
            q.max_depth,
            q.total_wait_ns as f64 / 1e6,
            q.waiting_at_end
        );
    }
    s
}
