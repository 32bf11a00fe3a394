//! Self-contained accelerator commands, compact scatter-gather lists, and the
//! per-group command queues the command detector feeds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::SgError;
use crate::sim::SimTime;

pub const DEFAULT_PAGE_SIZE: u32 = 4096;
pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

/// One (address, length) pair of a scatter-gather list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SgElement {
    pub address: u64,
    pub length: u32,
}

impl SgElement {
    pub fn new(address: u64, length: u32) -> Self {
        SgElement { address, length }
    }
}

/// Scatter-gather list with the middle lengths elided: every element other
/// than the first and last is exactly one page long.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactSgList {
    pub first_length: u32,
    /// Ignored when the list has a single address.
    pub last_length: u32,
    pub addresses: Vec<u64>,
    pub page_size: u32,
}

impl CompactSgList {
    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    /// Sum of the decoded element lengths.
    pub fn total_bytes(&self) -> u64 {
        match self.addresses.len() {
            0 => 0,
            1 => self.first_length as u64,
            n => {
                self.first_length as u64
                    + (n as u64 - 2) * self.page_size as u64
                    + self.last_length as u64
            }
        }
    }

    /// Length of element `index` after decoding.
    pub fn element_length(&self, index: usize) -> u32 {
        let n = self.addresses.len();
        if index == 0 {
            self.first_length
        } else if index + 1 == n {
            self.last_length
        } else {
            self.page_size
        }
    }

    pub fn validate(&self) -> Result<(), SgError> {
        if self.page_size == 0 {
            return Err(SgError::ZeroPageSize);
        }
        if self.addresses.is_empty() {
            return Err(SgError::Empty);
        }
        let check = |index: usize, length: u32| {
            if length == 0 || length > self.page_size {
                Err(SgError::LengthOutOfRange {
                    index,
                    length,
                    page_size: self.page_size,
                })
            } else {
                Ok(())
            }
        };
        check(0, self.first_length)?;
        if self.addresses.len() > 1 {
            check(self.addresses.len() - 1, self.last_length)?;
        }
        Ok(())
    }
}

/// Compacts a decoded element list. Middle elements must be exactly one page.
pub fn compact_sg(elements: &[SgElement], page_size: u32) -> Result<CompactSgList, SgError> {
    if page_size == 0 {
        return Err(SgError::ZeroPageSize);
    }
    let (first, last) = match (elements.first(), elements.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(SgError::Empty),
    };
    let n = elements.len();
    for (index, el) in elements.iter().enumerate() {
        if el.length == 0 || el.length > page_size {
            return Err(SgError::LengthOutOfRange {
                index,
                length: el.length,
                page_size,
            });
        }
        if index > 0 && index + 1 < n && el.length != page_size {
            return Err(SgError::MiddleLength {
                index,
                length: el.length,
                page_size,
            });
        }
    }
    Ok(CompactSgList {
        first_length: first.length,
        last_length: if n == 1 { first.length } else { last.length },
        addresses: elements.iter().map(|e| e.address).collect(),
        page_size,
    })
}

/// A request to run one accelerator invocation. Carries everything the
/// controller needs; the host is not consulted again after submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub command_id: u64,
    pub core_id: u32,
    pub acc_type: u32,
    /// One list per accelerator input.
    pub rx_lists: Vec<CompactSgList>,
    /// One list per accelerator output.
    pub tx_lists: Vec<CompactSgList>,
    pub submit_time: SimTime,
}

impl Command {
    pub fn rx_bytes(&self) -> u64 {
        self.rx_lists.iter().map(CompactSgList::total_bytes).sum()
    }

    pub fn tx_bytes(&self) -> u64 {
        self.tx_lists.iter().map(CompactSgList::total_bytes).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("accelerator type {acc_type} is not mapped to any command queue")]
pub struct UnmappedType {
    pub acc_type: u32,
}

/// One-level type-based grouping: accelerator type -> command queue index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeGrouping {
    group_of_type: Vec<Option<usize>>,
}

impl TypeGrouping {
    pub fn new(group_of_type: Vec<Option<usize>>) -> Self {
        TypeGrouping { group_of_type }
    }

    /// Type `i` goes to queue `i`.
    pub fn per_type(types: usize) -> Self {
        TypeGrouping::new((0..types).map(Some).collect())
    }

    /// Every type goes to queue 0.
    pub fn single(types: usize) -> Self {
        TypeGrouping::new(vec![Some(0); types])
    }

    pub fn group_of(&self, acc_type: u32) -> Option<usize> {
        self.group_of_type.get(acc_type as usize).copied().flatten()
    }
}

/// Picks the command queue for `cmd`. Pure in `(acc_type, grouping)`.
pub fn classify_command(cmd: &Command, grouping: &TypeGrouping) -> Result<usize, UnmappedType> {
    grouping.group_of(cmd.acc_type).ok_or(UnmappedType {
        acc_type: cmd.acc_type,
    })
}

/// Returned by [`CommandQueue::enqueue`] when the queue is at capacity. Hands
/// the command back so the submitter can retry.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueFull(pub Command);

/// Bounded FIFO of commands for one accelerator group.
#[derive(Debug, Clone)]
pub struct CommandQueue {
    pub group_id: usize,
    entries: VecDeque<Command>,
    capacity: usize,
}

impl CommandQueue {
    pub fn new(group_id: usize, capacity: usize) -> Self {
        CommandQueue {
            group_id,
            entries: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn enqueue(&mut self, cmd: Command) -> Result<(), QueueFull> {
        if self.is_full() {
            return Err(QueueFull(cmd));
        }
        self.entries.push_back(cmd);
        Ok(())
    }

    pub fn head(&self) -> Option<&Command> {
        self.entries.front()
    }

    pub fn dequeue(&mut self) -> Option<Command> {
        self.entries.pop_front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Command> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(id: u64, acc_type: u32) -> Command {
        let list = CompactSgList {
            first_length: 100,
            last_length: 100,
            addresses: vec![0x1000],
            page_size: 4096,
        };
        Command {
            command_id: id,
            core_id: 0,
            acc_type,
            rx_lists: vec![list.clone()],
            tx_lists: vec![list],
            submit_time: SimTime::ZERO,
        }
    }

    #[test]
    fn compact_single_full_page() {
        let l = compact_sg(&[SgElement::new(0x1000, 4096)], 4096).unwrap();
        assert_eq!(l.first_length, 4096);
        assert_eq!(l.addresses, vec![0x1000]);
        assert_eq!(l.total_bytes(), 4096);
    }

    #[test]
    fn compact_three_elements() {
        let els = [
            SgElement::new(0x0F80, 128),
            SgElement::new(0x2000, 4096),
            SgElement::new(0x3000, 512),
        ];
        let l = compact_sg(&els, 4096).unwrap();
        assert_eq!((l.first_length, l.last_length), (128, 512));
        assert_eq!(l.len(), 3);
        // 128 + 4096 + 512
        assert_eq!(l.total_bytes(), 4736);
    }

    #[test]
    fn short_middle_element_is_rejected() {
        let els = [
            SgElement::new(0x0F80, 128),
            SgElement::new(0x2000, 100),
            SgElement::new(0x3000, 512),
        ];
        assert_eq!(
            compact_sg(&els, 4096),
            Err(SgError::MiddleLength {
                index: 1,
                length: 100,
                page_size: 4096
            })
        );
    }

    #[test]
    fn empty_and_oversized_lists_are_rejected() {
        assert_eq!(compact_sg(&[], 4096), Err(SgError::Empty));
        assert!(matches!(
            compact_sg(&[SgElement::new(0, 5000)], 4096),
            Err(SgError::LengthOutOfRange { .. })
        ));
    }

    #[test]
    fn total_bytes_cases() {
        let single = CompactSgList {
            first_length: 100,
            last_length: 7,
            addresses: vec![0],
            page_size: 4096,
        };
        assert_eq!(single.total_bytes(), 100);
        let two = CompactSgList {
            first_length: 4096,
            last_length: 4096,
            addresses: vec![0, 4096],
            page_size: 4096,
        };
        assert_eq!(two.total_bytes(), 8192);
    }

    #[test]
    fn classification_follows_grouping() {
        let per_type = TypeGrouping::per_type(3);
        assert_eq!(classify_command(&cmd(0, 1), &per_type), Ok(1));
        let single = TypeGrouping::single(3);
        for t in 0..3 {
            assert_eq!(classify_command(&cmd(0, t), &single), Ok(0));
        }
        assert_eq!(
            classify_command(&cmd(0, 7), &per_type),
            Err(UnmappedType { acc_type: 7 })
        );
    }

    #[test]
    fn queue_is_bounded_fifo() {
        let mut q = CommandQueue::new(0, 2);
        assert!(q.enqueue(cmd(1, 0)).is_ok());
        assert_eq!(q.len(), 1);
        assert!(q.enqueue(cmd(2, 0)).is_ok());
        let QueueFull(back) = q.enqueue(cmd(3, 0)).unwrap_err();
        assert_eq!(back.command_id, 3);
        assert_eq!(q.dequeue().unwrap().command_id, 1);
        assert_eq!(q.dequeue().unwrap().command_id, 2);
        assert!(q.dequeue().is_none());
    }
}
