use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ultrashare::metrics::{read_trace, table_rows, write_trace, TABLE_HEADER};
use ultrashare::sweep::{expand, run_sweep, SweepParam};
use ultrashare::{
    emit_report, parse_config, replay, run_scenario_with, ControllerMode, Error, ReportFormat,
    RunOptions,
};

#[derive(Parser)]
#[command(
    name = "ultrashare",
    version,
    about = "Accelerator-sharing controller simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's mode.
        #[arg(long)]
        mode: Option<ControllerMode>,
        /// Simulated time, e.g. `40ms` or a plain number of nanoseconds.
        #[arg(long, value_parser = parse_duration)]
        duration: Option<u64>,
        /// Report destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// summary, structured or table-rows.
        #[arg(long, default_value = "summary")]
        format: ReportFormat,
        /// Write the line-delimited event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a scenario file and list every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a scenario once per parameter combination.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// `path=values`, e.g. `apps.0.max_outstanding=1..=9`. Repeatable.
        #[arg(long = "param", required = true)]
        params: Vec<SweepParam>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "table-rows")]
        format: ReportFormat,
    },
    /// Rebuild a report from a dumped trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "summary")]
        format: ReportFormat,
    },
}

fn parse_duration(s: &str) -> Result<u64, String> {
    if let Ok(ns) = s.parse::<u64>() {
        return Ok(ns);
    }
    humantime::parse_duration(s)
        .map(|d| d.as_nanos() as u64)
        .map_err(|e| e.to_string())
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Cmd::Run {
            scenario,
            seed,
            mode,
            duration,
            out,
            format,
            trace,
        } => {
            let mut cfg = parse_config(&scenario)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(d) = duration {
                cfg.duration_ns = d;
            }
            let opts = RunOptions {
                keep_trace: trace.is_some(),
            };
            let mut report = run_scenario_with(&cfg, opts)?;
            if let (Some(path), Some(records)) = (&trace, report.trace.take()) {
                write_trace(&records, BufWriter::new(File::create(path)?))?;
            }
            write_out(out.as_deref(), &emit_report(&report, format))
        }
        Cmd::Validate { scenario } => {
            let cfg = parse_config(&scenario)?;
            println!(
                "{}: ok ({} accelerators, {} apps, mode {})",
                scenario.display(),
                cfg.accelerator_count(),
                cfg.apps.len(),
                cfg.mode
            );
            Ok(())
        }
        Cmd::Sweep {
            scenario,
            params,
            out,
            format,
        } => {
            let base = parse_config(&scenario)?;
            let points = expand(&base, &params)?;
            let results = run_sweep(&points)?;
            let text = match format {
                ReportFormat::TableRows => {
                    let mut s = format!("{TABLE_HEADER}\n");
                    for (label, r) in &results {
                        for row in table_rows(r, Some(label)) {
                            s.push_str(&row);
                            s.push('\n');
                        }
                    }
                    s
                }
                ReportFormat::Structured => {
                    let v: Vec<_> = results
                        .iter()
                        .map(|(label, r)| serde_json::json!({ "sample": label, "report": r }))
                        .collect();
                    serde_json::to_string_pretty(&v).expect("reports serialize") + "\n"
                }
                ReportFormat::Summary => results
                    .iter()
                    .map(|(label, r)| format!("== {label}\n{}", emit_report(r, format)))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            write_out(out.as_deref(), &text)
        }
        Cmd::Replay { trace, out, format } => {
            let records = read_trace(BufReader::new(File::open(&trace)?))?;
            write_out(out.as_deref(), &emit_report(&replay(&records), format))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
