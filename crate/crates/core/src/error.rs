use thiserror::Error;

use crate::link::Direction;
use crate::sim::SimTime;

/// Fatal simulation errors. Any of these means the engine (or a caller
/// driving a component directly) broke a contract; the run is aborted.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    ScheduledInPast { at: SimTime, now: SimTime },

    #[error("rng stream {0} was never registered")]
    UnknownStream(u64),

    #[error("request info queue out of order: head is command {expected}, got command {got}")]
    OrderingViolation { expected: u64, got: u64 },

    #[error("request info queue is empty but command {0} arrived")]
    MissingRequestInfo(u64),

    #[error("{direction} completion on accelerator {acc} with no matching in-flight request")]
    SpuriousCompletion { direction: Direction, acc: usize },

    #[error("{direction} channel busy: transfer already in flight")]
    ChannelBusy { direction: Direction },

    #[error("buffer bound violated on accelerator {acc}: {detail}")]
    BufferBound { acc: usize, detail: String },

    #[error("accelerator {acc} received command {command_id} while still busy")]
    ControllerBusy { acc: usize, command_id: u64 },

    #[error("malformed scatter-gather list for command {command_id}: {source}")]
    BadSgList {
        command_id: u64,
        #[source]
        source: SgError,
    },
}

/// Scatter-gather list encoding errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SgError {
    #[error("scatter-gather list has no elements")]
    Empty,

    #[error(
        "element {index} has length {length}; middle elements must be exactly {page_size} bytes"
    )]
    MiddleLength {
        index: usize,
        length: u32,
        page_size: u32,
    },

    #[error("element {index} has length {length}, outside 1..={page_size}")]
    LengthOutOfRange {
        index: usize,
        length: u32,
        page_size: u32,
    },

    #[error("page size must be non-zero")]
    ZeroPageSize,
}

/// Errors from reconfiguring the group or priority tables.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("group {group} out of range (table has {groups} groups)")]
    GroupOutOfRange { group: usize, groups: usize },

    #[error("row has {got} entries, table has {expected} accelerators")]
    WidthMismatch { expected: usize, got: usize },

    #[error("accelerator {index} out of range (table has {count} accelerators)")]
    AcceleratorOutOfRange { index: usize, count: usize },

    #[error("too many accelerators: {0} (at most 64 are supported)")]
    TooManyAccelerators(usize),

    #[error("weight for accelerator {index} is {weight}; weights must be in 1..=255")]
    BadWeight { index: usize, weight: u32 },
}

/// A single validation failure, tagged with the path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse scenario: {0}")]
    Parse(String),

    #[error("invalid scenario:\n{}", format_issues(.0))]
    Invalid(Vec<ConfigIssue>),
}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            ConfigError::Invalid(issues) => issues,
            _ => &[],
        }
    }
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Top-level error for running a scenario.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("simulation aborted: {0}")]
    Sim(#[from] SimError),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
