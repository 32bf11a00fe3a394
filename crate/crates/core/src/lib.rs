//! Discrete-event simulator of a multi-queue FPGA accelerator-sharing
//! controller.
//!
//! Host threads submit commands that carry compact scatter-gather lists.
//! Commands land in per-group queues; an allocation unit hands each queue
//! head to the lowest-numbered idle accelerator of its group. Each
//! accelerator's controller streams data through small page buffers while a
//! weighted round-robin scheduler per link direction shares the bandwidth.
//!
//! ```no_run
//! use ultrashare::{parse_config, run_scenario, emit_report, ReportFormat};
//!
//! let cfg = parse_config("scenarios/mixed_types.toml")?;
//! let report = run_scenario(&cfg)?;
//! print!("{}", emit_report(&report, ReportFormat::Summary));
//! # Ok::<(), ultrashare::Error>(())
//! ```

pub mod allocator;
pub mod command;
pub mod config;
pub mod controller;
pub mod engine;
pub mod error;
pub mod link;
pub mod metrics;
pub mod presets;
pub mod sg;
pub mod sim;
pub mod sweep;
pub mod workload;

pub use allocator::{
    allocate_step, allocate_step_filtered, AccMask, AcceleratorStatus, Allocation,
    CommandRequester, GroupTable, RequestInfo,
};
pub use command::{
    classify_command, compact_sg, Command, CommandQueue, CompactSgList, SgElement, TypeGrouping,
};
pub use config::{
    parse_config, AcceleratorConfig, GroupConfig, LinkConfig, ScenarioConfig, TimelineAction,
    TimelineEntry,
};
pub use controller::{compute_model, AccelParams, ControllerState};
pub use engine::{
    run_scenario, run_scenario_with, run_single_queue_mode, run_static_mode, RunOptions, Simulation,
};
pub use error::{ConfigError, Error, SgError, SimError, TableError};
pub use link::{Channel, Direction, LinkModel, PriorityTable, WeightedScheduler};
pub use metrics::{emit_report, replay, MetricsReport, ReportFormat, TraceEvent, TraceRecord};
pub use sg::{decode_sg, distribute};
pub use sim::{EventQueue, RngStreams, SimTime};
pub use workload::{AppSpec, ControllerMode};
