//! Application workload descriptions and the per-thread submission state.
//!
//! Each application runs `threads` host threads. A thread repeatedly spends
//! its preparation time building a frame and then submits one command, as
//! long as it has fewer than `max_outstanding` uncompleted commands. When the
//! target command queue is full the submitting thread blocks until a slot
//! frees up.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::command::{compact_sg, CompactSgList, SgElement};
use crate::error::SgError;

/// Which controller organisation a run uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    /// One command queue per accelerator group, dynamic allocation.
    #[default]
    Ultrashare,
    /// One shared FIFO; the head waits for an accelerator of its own type.
    SingleQueue,
    /// Every thread is pinned to one accelerator and waits for it.
    Static,
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerMode::Ultrashare => "ultrashare",
            ControllerMode::SingleQueue => "single-queue",
            ControllerMode::Static => "static",
        })
    }
}

impl FromStr for ControllerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ultrashare" => Ok(ControllerMode::Ultrashare),
            "single-queue" => Ok(ControllerMode::SingleQueue),
            "static" => Ok(ControllerMode::Static),
            other => Err(format!(
                "unknown mode `{other}` (expected ultrashare, single-queue or static)"
            )),
        }
    }
}

fn one() -> u32 {
    1
}

/// One application: what it asks for and how hard it pushes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    pub acc_type: u32,
    /// Defaults to the nominal input frame of the requested type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_bytes_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_bytes_out: Option<u64>,
    /// Host-side time to prepare one request. Defaults to
    /// `frame_bytes_in * prep_ns_per_byte` from the scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prep_ns: Option<u64>,
    /// Each preparation takes up to this much longer, drawn uniformly from
    /// the app's random stream.
    #[serde(default)]
    pub prep_jitter_ns: u64,
    /// Uncompleted commands allowed per thread.
    #[serde(default = "one")]
    pub max_outstanding: u32,
    #[serde(default = "one")]
    pub threads: u32,
    /// Total requests across all threads; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_requests: Option<u64>,
    #[serde(default)]
    pub start_ns: u64,
    /// Static mode: accelerator index per thread.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_accs: Option<Vec<usize>>,
    /// Byte offset of the frame buffers inside their first page.
    #[serde(default)]
    pub buffer_offset: u32,
}

impl AppSpec {
    pub fn new(acc_type: u32) -> Self {
        AppSpec {
            acc_type,
            frame_bytes_in: None,
            frame_bytes_out: None,
            prep_ns: None,
            prep_jitter_ns: 0,
            max_outstanding: 1,
            threads: 1,
            total_requests: None,
            start_ns: 0,
            static_accs: None,
            buffer_offset: 0,
        }
    }

    pub fn frames(mut self, bytes_in: u64, bytes_out: u64) -> Self {
        self.frame_bytes_in = Some(bytes_in);
        self.frame_bytes_out = Some(bytes_out);
        self
    }

    pub fn prep_ns(mut self, ns: u64) -> Self {
        self.prep_ns = Some(ns);
        self
    }

    pub fn jitter(mut self, ns: u64) -> Self {
        self.prep_jitter_ns = ns;
        self
    }

    pub fn window(mut self, max_outstanding: u32) -> Self {
        self.max_outstanding = max_outstanding;
        self
    }

    pub fn threads(mut self, threads: u32) -> Self {
        self.threads = threads;
        self
    }

    pub fn total(mut self, requests: u64) -> Self {
        self.total_requests = Some(requests);
        self
    }

    pub fn pinned(mut self, accs: Vec<usize>) -> Self {
        self.threads = accs.len() as u32;
        self.static_accs = Some(accs);
        self
    }

    /// Upper bound on this app's uncompleted commands.
    pub fn outstanding_limit(&self) -> u64 {
        self.threads as u64 * self.max_outstanding as u64
    }
}

/// Lays out a `total`-byte host buffer starting `offset` bytes into its first
/// page, drawing page addresses from `next_page`.
pub fn frame_sg_list(
    total: u64,
    offset: u32,
    page_size: u32,
    mut next_page: impl FnMut() -> u64,
) -> Result<CompactSgList, SgError> {
    if page_size == 0 {
        return Err(SgError::ZeroPageSize);
    }
    if total == 0 {
        return Err(SgError::Empty);
    }
    let page = page_size as u64;
    let offset = offset as u64 % page;
    let mut elements = Vec::with_capacity((total / page + 2) as usize);
    let mut left = total;
    let first = left.min(page - offset);
    elements.push(SgElement::new(next_page() * page + offset, first as u32));
    left -= first;
    while left > 0 {
        let len = left.min(page);
        elements.push(SgElement::new(next_page() * page, len as u32));
        left -= len;
    }
    compact_sg(&elements, page_size)
}

/// Per-thread submission state.
#[derive(Debug, Clone, Default)]
pub(crate) struct ThreadState {
    pub outstanding: u32,
    pub preparing: bool,
    pub blocked: bool,
}

/// Runtime state of one application.
#[derive(Debug, Clone)]
pub(crate) struct AppState {
    pub spec: AppSpec,
    pub frame_in: u64,
    pub frame_out: u64,
    pub prep_ns: u64,
    pub threads: Vec<ThreadState>,
    /// Requests started (preparing or submitted), counted against the total.
    pub issued: u64,
}

impl AppState {
    pub fn new(spec: AppSpec, frame_in: u64, frame_out: u64, prep_ns: u64) -> Self {
        let threads = vec![ThreadState::default(); spec.threads as usize];
        AppState {
            spec,
            frame_in,
            frame_out,
            prep_ns,
            threads,
            issued: 0,
        }
    }

    /// Whether `thread` should start preparing another request now.
    pub fn may_prepare(&self, thread: usize) -> bool {
        let t = &self.threads[thread];
        !t.preparing
            && !t.blocked
            && t.outstanding < self.spec.max_outstanding
            && self.spec.total_requests.is_none_or(|n| self.issued < n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sg::decode_sg;

    #[test]
    fn mode_parses_cli_spellings() {
        for m in [
            ControllerMode::Ultrashare,
            ControllerMode::SingleQueue,
            ControllerMode::Static,
        ] {
            assert_eq!(m.to_string().parse::<ControllerMode>(), Ok(m));
        }
        assert!("fifo".parse::<ControllerMode>().is_err());
    }

    #[test]
    fn frame_layout_with_offset() {
        let mut n = 10;
        let list = frame_sg_list(129_600, 128, 4096, || {
            n += 1;
            n
        })
        .unwrap();
        assert_eq!(list.total_bytes(), 129_600);
        let els = decode_sg(&list).unwrap();
        assert_eq!(els[0].length, 4096 - 128);
        assert_eq!(els[0].address, 11 * 4096 + 128);
        assert!(els[1..els.len() - 1].iter().all(|e| e.length == 4096));
        assert!(els.iter().skip(1).all(|e| e.address % 4096 == 0));
    }

    #[test]
    fn frame_layout_small_and_aligned() {
        let list = frame_sg_list(100, 0, 4096, || 1).unwrap();
        assert_eq!(list.len(), 1);
        assert_eq!(list.total_bytes(), 100);
        let list = frame_sg_list(8192, 0, 4096, || 1).unwrap();
        assert_eq!(
            (list.len(), list.first_length, list.last_length),
            (2, 4096, 4096)
        );
    }

    #[test]
    fn window_and_budget_gate_preparation() {
        let mut app = AppState::new(AppSpec::new(0).window(2).total(3), 10, 10, 0);
        assert!(app.may_prepare(0));
        app.threads[0].outstanding = 2;
        assert!(!app.may_prepare(0));
        app.threads[0].outstanding = 0;
        app.issued = 3;
        assert!(!app.may_prepare(0));
    }
}
