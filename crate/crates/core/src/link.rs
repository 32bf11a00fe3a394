//! Shared host/FPGA link: independent RX and TX channels, each arbitrated by
//! a weighted round-robin data request scheduler.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::command::SgElement;
use crate::error::{SimError, TableError};
use crate::sim::SimTime;

pub const DEFAULT_TRANSFER_OVERHEAD_NS: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Host to accelerator.
    Rx,
    /// Accelerator to host.
    Tx,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Rx => "rx",
            Direction::Tx => "tx",
        })
    }
}

/// Per-accelerator scheduling weights, each in `1..=255`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityTable {
    weights: Vec<u8>,
}

impl PriorityTable {
    pub fn uniform(accelerators: usize) -> Self {
        PriorityTable {
            weights: vec![1; accelerators],
        }
    }

    pub fn new(weights: &[u32]) -> Result<Self, TableError> {
        let weights = weights
            .iter()
            .enumerate()
            .map(|(index, &w)| match u8::try_from(w) {
                Ok(b) if b >= 1 => Ok(b),
                _ => Err(TableError::BadWeight { index, weight: w }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PriorityTable { weights })
    }

    pub fn weights(&self) -> &[u8] {
        &self.weights
    }

    pub fn weight(&self, acc: usize) -> u32 {
        self.weights[acc] as u32
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.weights.iter().map(|w| *w as u32).sum()
    }
}

/// Bandwidth (bytes/ns) per direction plus a fixed per-element cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub rx_bandwidth: f64,
    pub tx_bandwidth: f64,
    pub per_transfer_overhead_ns: u64,
}

impl LinkModel {
    pub fn bandwidth(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Rx => self.rx_bandwidth,
            Direction::Tx => self.tx_bandwidth,
        }
    }

    /// Channel occupancy for one element.
    pub fn transfer_ns(&self, dir: Direction, bytes: u32) -> u64 {
        self.per_transfer_overhead_ns + (bytes as f64 / self.bandwidth(dir)).ceil() as u64
    }
}

/// Position of the round-robin scheduler: the accelerator being visited and
/// how many grants it may still receive during this visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WrrCursor {
    pub acc: usize,
    pub remaining: u32,
}

/// Weighted round-robin over accelerators. A visit to accelerator `a` grants
/// up to `weight[a]` requests; the visit ends early as soon as `a` has
/// nothing pending, so the scheduler never idles while work exists.
#[derive(Debug, Clone)]
pub struct WeightedScheduler {
    table: PriorityTable,
    cursor: WrrCursor,
}

impl WeightedScheduler {
    pub fn new(table: PriorityTable) -> Self {
        let remaining = table.weights.first().map_or(0, |w| *w as u32);
        WeightedScheduler {
            table,
            cursor: WrrCursor { acc: 0, remaining },
        }
    }

    pub fn cursor(&self) -> WrrCursor {
        self.cursor
    }

    pub fn table(&self) -> &PriorityTable {
        &self.table
    }

    /// Replaces the weights. The visit in progress keeps the budget it started
    /// with; new weights apply from the next visit.
    pub fn set_priority_table(&mut self, table: PriorityTable) -> Result<(), TableError> {
        if table.len() != self.table.len() {
            return Err(TableError::WidthMismatch {
                expected: self.table.len(),
                got: table.len(),
            });
        }
        self.table = table;
        Ok(())
    }

    /// Grants one pending request, or `None` if nothing is pending.
    pub fn schedule_step(&mut self, pending: &[bool]) -> Option<usize> {
        let k = self.table.len();
        debug_assert_eq!(pending.len(), k);
        if k == 0 || !pending.iter().any(|p| *p) {
            return None;
        }
        // At most one partial visit plus a full lap.
        for _ in 0..=k {
            let a = self.cursor.acc;
            if self.cursor.remaining > 0 && pending[a] {
                self.cursor.remaining -= 1;
                return Some(a);
            }
            let next = (a + 1) % k;
            self.cursor = WrrCursor {
                acc: next,
                remaining: self.table.weight(next),
            };
        }
        unreachable!("a pending accelerator is reached within one lap")
    }
}

/// Bookkeeping for one element on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InFlight {
    pub acc: usize,
    pub command_id: u64,
    pub element: SgElement,
}

/// One direction of the link: serialized transfers, one in flight at a time.
#[derive(Debug, Clone)]
pub struct Channel {
    direction: Direction,
    scheduler: WeightedScheduler,
    /// Data request information: what is on the wire, in issue order.
    in_flight: VecDeque<InFlight>,
    hold_until: SimTime,
    busy_ns: u64,
}

impl Channel {
    pub fn new(direction: Direction, table: PriorityTable) -> Self {
        Channel {
            direction,
            scheduler: WeightedScheduler::new(table),
            in_flight: VecDeque::new(),
            hold_until: SimTime::ZERO,
            busy_ns: 0,
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn scheduler(&self) -> &WeightedScheduler {
        &self.scheduler
    }

    pub fn scheduler_mut(&mut self) -> &mut WeightedScheduler {
        &mut self.scheduler
    }

    pub fn is_busy(&self) -> bool {
        !self.in_flight.is_empty()
    }

    /// True if the channel may start a transfer at `now`.
    pub fn is_available(&self, now: SimTime) -> bool {
        !self.is_busy() && now >= self.hold_until
    }

    /// Keeps the channel from starting new transfers before `until`.
    pub fn hold(&mut self, until: SimTime) {
        if until > self.hold_until {
            self.hold_until = until;
        }
    }

    pub fn hold_until(&self) -> SimTime {
        self.hold_until
    }

    /// Total time spent transferring.
    pub fn busy_ns(&self) -> u64 {
        self.busy_ns
    }

    /// Starts a granted transfer; returns its completion time.
    pub fn begin_transfer(
        &mut self,
        now: SimTime,
        transfer: InFlight,
        link: &LinkModel,
    ) -> Result<SimTime, SimError> {
        if self.is_busy() {
            return Err(SimError::ChannelBusy {
                direction: self.direction,
            });
        }
        let duration = link.transfer_ns(self.direction, transfer.element.length);
        self.busy_ns += duration;
        self.in_flight.push_back(transfer);
        Ok(now + duration)
    }

    /// Retires the oldest transfer and tells the caller where its data goes.
    pub fn complete(&mut self) -> Option<InFlight> {
        self.in_flight.pop_front()
    }
}
