//! Dynamic accelerator allocation: the group table, the idle-status vector,
//! the round-robin allocation unit, and the command requester that kicks off
//! scatter-gather list fetches.

use std::collections::VecDeque;
use std::fmt;

use crate::command::{Command, CommandQueue};
use crate::error::{SimError, TableError};
use crate::sim::{EventHandle, EventQueue, SimTime};

pub const MAX_ACCELERATORS: usize = 64;
pub const DEFAULT_SG_FETCH_LATENCY_NS: u64 = 500;

/// Bit `i` set means accelerator `i` is a member / idle / eligible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AccMask(pub u64);

impl AccMask {
    pub const NONE: AccMask = AccMask(0);
    pub const ALL: AccMask = AccMask(u64::MAX);

    pub fn first_n(n: usize) -> AccMask {
        if n >= 64 {
            AccMask::ALL
        } else {
            AccMask((1u64 << n) - 1)
        }
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> AccMask {
        AccMask(indices.into_iter().fold(0, |m, i| m | (1u64 << i)))
    }

    pub fn from_bools(bits: &[bool]) -> AccMask {
        AccMask::from_indices(bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
    }

    pub fn contains(self, index: usize) -> bool {
        index < 64 && self.0 & (1u64 << index) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Keeps only the lowest set bit (the rightmost 1).
    pub fn keep_rightmost(self) -> AccMask {
        AccMask(self.0 & self.0.wrapping_neg())
    }

    pub fn rightmost(self) -> Option<usize> {
        (!self.is_empty()).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |i| self.contains(*i))
    }
}

impl std::ops::BitAnd for AccMask {
    type Output = AccMask;
    fn bitand(self, rhs: AccMask) -> AccMask {
        AccMask(self.0 & rhs.0)
    }
}

impl std::ops::BitOr for AccMask {
    type Output = AccMask;
    fn bitor(self, rhs: AccMask) -> AccMask {
        AccMask(self.0 | rhs.0)
    }
}

impl fmt::Display for AccMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

/// Smallest index whose flag is set, if any.
pub fn rightmost_idle(idle: &[bool]) -> Option<usize> {
    idle.iter().position(|b| *b)
}

/// Group-to-accelerator membership matrix, one row per command queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTable {
    accelerators: usize,
    rows: Vec<AccMask>,
}

impl GroupTable {
    pub fn new(accelerators: usize, rows: Vec<AccMask>) -> Result<Self, TableError> {
        if accelerators > MAX_ACCELERATORS {
            return Err(TableError::TooManyAccelerators(accelerators));
        }
        let valid = AccMask::first_n(accelerators);
        for row in &rows {
            if let Some(bad) = (*row & AccMask(!valid.0)).rightmost() {
                return Err(TableError::AcceleratorOutOfRange {
                    index: bad,
                    count: accelerators,
                });
            }
        }
        Ok(GroupTable { accelerators, rows })
    }

    /// Builds the table from a boolean matrix (`acc_map[t][k]`).
    pub fn from_matrix(accelerators: usize, matrix: &[Vec<bool>]) -> Result<Self, TableError> {
        let rows = matrix
            .iter()
            .map(|row| {
                if row.len() != accelerators {
                    Err(TableError::WidthMismatch {
                        expected: accelerators,
                        got: row.len(),
                    })
                } else {
                    Ok(AccMask::from_bools(row))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        GroupTable::new(accelerators, rows)
    }

    /// Group `g` holds exactly the accelerators whose type is `g`.
    pub fn by_type(acc_types: &[u32], groups: usize) -> Result<Self, TableError> {
        let rows = (0..groups)
            .map(|g| {
                AccMask::from_indices(
                    acc_types
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| **t as usize == g)
                        .map(|(i, _)| i),
                )
            })
            .collect();
        GroupTable::new(acc_types.len(), rows)
    }

    /// Each accelerator is its own group.
    pub fn identity(accelerators: usize) -> Result<Self, TableError> {
        GroupTable::new(
            accelerators,
            (0..accelerators)
                .map(|i| AccMask::from_indices([i]))
                .collect(),
        )
    }

    pub fn groups(&self) -> usize {
        self.rows.len()
    }

    pub fn accelerators(&self) -> usize {
        self.accelerators
    }

    pub fn row(&self, group: usize) -> AccMask {
        self.rows[group]
    }

    pub fn to_matrix(&self) -> Vec<Vec<bool>> {
        self.rows
            .iter()
            .map(|r| (0..self.accelerators).map(|i| r.contains(i)).collect())
            .collect()
    }

    /// Replaces one row. Takes effect for the next allocation step; commands
    /// already allocated keep their accelerator.
    pub fn reconfigure(&mut self, group: usize, row: AccMask) -> Result<(), TableError> {
        if group >= self.rows.len() {
            return Err(TableError::GroupOutOfRange {
                group,
                groups: self.rows.len(),
            });
        }
        if let Some(bad) = (row & AccMask(!AccMask::first_n(self.accelerators).0)).rightmost() {
            return Err(TableError::AcceleratorOutOfRange {
                index: bad,
                count: self.accelerators,
            });
        }
        self.rows[group] = row;
        Ok(())
    }
}

/// Idle flags for every accelerator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceleratorStatus {
    count: usize,
    idle: AccMask,
}

impl AcceleratorStatus {
    pub fn all_idle(count: usize) -> Self {
        AcceleratorStatus {
            count,
            idle: AccMask::first_n(count),
        }
    }

    pub fn from_bools(idle: &[bool]) -> Self {
        AcceleratorStatus {
            count: idle.len(),
            idle: AccMask::from_bools(idle),
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn idle_mask(&self) -> AccMask {
        self.idle
    }

    pub fn is_idle(&self, acc: usize) -> bool {
        self.idle.contains(acc)
    }

    pub fn set_busy(&mut self, acc: usize) {
        self.idle.0 &= !(1u64 << acc);
    }

    pub fn set_idle(&mut self, acc: usize) {
        self.idle.0 |= 1u64 << acc;
    }
}

/// Result of one successful allocation step.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub queue: usize,
    pub command: Command,
    pub acc: usize,
}

/// One allocation-unit step with the plain group-row mask.
pub fn allocate_step(
    status: &mut AcceleratorStatus,
    table: &GroupTable,
    queues: &mut [CommandQueue],
    cursor: &mut usize,
) -> Option<Allocation> {
    allocate_step_filtered(status, table, queues, cursor, |_| AccMask::ALL)
}

/// One allocation-unit step.
///
/// Visits at most `t` queues cyclically starting at `*cursor`. A queue is
/// served if it has a head command and `status & row(Q) & eligible(head)` is
/// non-zero; the head goes to the lowest-numbered idle member, which is
/// marked busy. The cursor moves to the queue after the one served; when
/// nothing is served a full lap leaves it where it was.
///
/// `eligible` narrows the candidate set per head command. The multi-queue
/// controller passes all-ones; the single-queue baseline uses it to require
/// an accelerator of the head's own type.
pub fn allocate_step_filtered<F>(
    status: &mut AcceleratorStatus,
    table: &GroupTable,
    queues: &mut [CommandQueue],
    cursor: &mut usize,
    eligible: F,
) -> Option<Allocation>
where
    F: Fn(&Command) -> AccMask,
{
    let t = queues.len();
    debug_assert_eq!(t, table.groups());
    if t == 0 {
        return None;
    }
    let start = *cursor % t;
    for step in 0..t {
        let q = (start + step) % t;
        let Some(head) = queues[q].head() else {
            continue;
        };
        let idle = status.idle_mask() & table.row(q) & eligible(head);
        if let Some(acc) = idle.keep_rightmost().rightmost() {
            let command = queues[q].dequeue().expect("head present");
            status.set_busy(acc);
            *cursor = (q + 1) % t;
            return Some(Allocation {
                queue: q,
                command,
                acc,
            });
        }
    }
    *cursor = start;
    None
}

/// Bookkeeping kept per allocated command until its scatter-gather lists arrive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestInfo {
    pub command_id: u64,
    pub allocated_acc: usize,
    pub rx_list_lengths: Vec<usize>,
    pub tx_list_lengths: Vec<usize>,
}

impl RequestInfo {
    pub fn for_allocation(alloc: &Allocation) -> Self {
        RequestInfo {
            command_id: alloc.command.command_id,
            allocated_acc: alloc.acc,
            rx_list_lengths: alloc.command.rx_lists.iter().map(|l| l.len()).collect(),
            tx_list_lengths: alloc.command.tx_lists.iter().map(|l| l.len()).collect(),
        }
    }
}

/// Issues scatter-gather list fetches and owns the request information queue.
#[derive(Debug, Clone)]
pub struct CommandRequester {
    fetch_latency_ns: u64,
    info: VecDeque<RequestInfo>,
}

impl CommandRequester {
    pub fn new(fetch_latency_ns: u64) -> Self {
        CommandRequester {
            fetch_latency_ns,
            info: VecDeque::new(),
        }
    }

    pub fn fetch_latency_ns(&self) -> u64 {
        self.fetch_latency_ns
    }

    /// Records the allocation and schedules `on_fetched` after the fetch latency.
    /// Returns immediately; the allocation unit can move on to the next command.
    pub fn request_sg_fetch<E>(
        &mut self,
        alloc: &Allocation,
        events: &mut EventQueue<E>,
        on_fetched: E,
    ) -> Result<(SimTime, EventHandle), SimError> {
        self.info.push_back(RequestInfo::for_allocation(alloc));
        let at = events.now() + self.fetch_latency_ns;
        let handle = events.schedule(at, on_fetched)?;
        Ok((at, handle))
    }

    pub fn info_queue(&self) -> &VecDeque<RequestInfo> {
        &self.info
    }

    pub fn info_queue_mut(&mut self) -> &mut VecDeque<RequestInfo> {
        &mut self.info
    }
}
