//! Scatter-gather decoder and distributor.

use std::collections::VecDeque;

use crate::allocator::RequestInfo;
use crate::command::{CompactSgList, SgElement};
use crate::controller::ControllerState;
use crate::error::{SgError, SimError};
use crate::link::Direction;

/// Expands a compact list into its (address, length) elements.
pub fn decode_sg(list: &CompactSgList) -> Result<Vec<SgElement>, SgError> {
    list.validate()?;
    Ok(list
        .addresses
        .iter()
        .enumerate()
        .map(|(i, &address)| SgElement {
            address,
            length: list.element_length(i),
        })
        .collect())
}

/// Decoded elements of one list, addressed to one accelerator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SgStream {
    pub command_id: u64,
    pub direction: Direction,
    pub elements: Vec<SgElement>,
    pub target_acc: usize,
}

impl SgStream {
    pub fn total_bytes(&self) -> u64 {
        self.elements.iter().map(|e| e.length as u64).sum()
    }
}

/// Decodes every list of one direction into streams bound for `target_acc`.
pub fn decode_lists(
    command_id: u64,
    direction: Direction,
    lists: &[CompactSgList],
    target_acc: usize,
) -> Result<Vec<SgStream>, SimError> {
    lists
        .iter()
        .map(|l| {
            decode_sg(l)
                .map(|elements| SgStream {
                    command_id,
                    direction,
                    elements,
                    target_acc,
                })
                .map_err(|source| SimError::BadSgList { command_id, source })
        })
        .collect()
}

/// Hands one command's decoded streams to the allocated controller and
/// retires the matching request information entry.
///
/// The head of `info_queue` must belong to the same command; anything else
/// means fetches completed out of order.
pub fn distribute(
    streams: Vec<SgStream>,
    info_queue: &mut VecDeque<RequestInfo>,
    controllers: &mut [ControllerState],
) -> Result<RequestInfo, SimError> {
    let Some(command_id) = streams.first().map(|s| s.command_id) else {
        return info_queue
            .pop_front()
            .ok_or(SimError::MissingRequestInfo(u64::MAX));
    };
    let head = info_queue
        .front()
        .ok_or(SimError::MissingRequestInfo(command_id))?;
    if let Some(bad) = streams.iter().find(|s| s.command_id != head.command_id) {
        return Err(SimError::OrderingViolation {
            expected: head.command_id,
            got: bad.command_id,
        });
    }
    let acc = head.allocated_acc;
    let ctrl = &mut controllers[acc];
    for stream in streams {
        match stream.direction {
            Direction::Rx => ctrl.push_rx(stream.elements),
            Direction::Tx => ctrl.push_tx(stream.elements),
        }
    }
    Ok(info_queue.pop_front().expect("head checked"))
}
