//! Virtual time, the pending-event queue, and per-stream random numbers.
//!
//! One tick is one nanosecond. Events with equal timestamps are dispatched in
//! the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Virtual time in nanoseconds since the start of the run.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn saturating_sub(self, other: SimTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, ns: u64) -> SimTime {
        SimTime(self.0 + ns)
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, other: SimTime) -> u64 {
        self.0 - other.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// A dispatched (or pending) event: timestamp, tie-break sequence, payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<E> {
    pub time: SimTime,
    pub seq: u64,
    pub payload: E,
}

/// Opaque handle returned by [`EventQueue::schedule`], used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Pending<E>(SimEvent<E>);

impl<E> PartialEq for Pending<E> {
    fn eq(&self, other: &Self) -> bool {
        self.0.time == other.0.time && self.0.seq == other.0.seq
    }
}

impl<E> Eq for Pending<E> {}

impl<E> PartialOrd for Pending<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Pending<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// Ordered set of pending events plus the simulation clock.
pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Pending<E>>,
    cancelled: HashSet<u64>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of pending (not yet dispatched, possibly cancelled) events.
    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: SimTime, payload: E) -> Result<EventHandle, SimError> {
        if time < self.now {
            return Err(SimError::ScheduledInPast {
                at: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Pending(SimEvent { time, seq, payload }));
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay_ns: u64, payload: E) -> Result<EventHandle, SimError> {
        self.schedule(self.now + delay_ns, payload)
    }

    /// Cancels a pending event. Cancelling an already dispatched event is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pops the next event with `time <= limit` and advances the clock to it.
    pub fn pop_next(&mut self, limit: SimTime) -> Option<SimEvent<E>> {
        loop {
            let head = self.heap.peek()?;
            if head.0.time > limit {
                return None;
            }
            let Pending(ev) = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            return Some(ev);
        }
    }

    /// Moves the clock forward to `limit` (never backwards).
    pub fn advance_to(&mut self, limit: SimTime) {
        if limit > self.now {
            self.now = limit;
        }
    }

    /// Dispatches every event with `time <= limit` in `(time, seq)` order and
    /// leaves the clock at `limit`.
    pub fn run_until<F>(&mut self, limit: SimTime, mut handler: F) -> Result<SimTime, SimError>
    where
        F: FnMut(&mut Self, SimEvent<E>) -> Result<(), SimError>,
    {
        while let Some(ev) = self.pop_next(limit) {
            handler(self, ev)?;
        }
        self.advance_to(limit);
        Ok(self.now)
    }
}

/// Seedable random streams keyed by a stream id.
///
/// Each stream is ChaCha8 seeded from the global seed (via
/// `SeedableRng::seed_from_u64`) with the ChaCha stream selector set to the
/// stream id, so streams are independent and adding a stream never perturbs
/// the others.
#[derive(Debug, Clone)]
pub struct RngStreams {
    seed: u64,
    streams: BTreeMap<u64, ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams {
            seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers `stream_id`. Re-registering an existing stream leaves it untouched.
    pub fn register(&mut self, stream_id: u64) {
        let seed = self.seed;
        self.streams.entry(stream_id).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id);
            rng
        });
    }

    pub fn next_u64(&mut self, stream_id: u64) -> Result<u64, SimError> {
        Ok(self.stream(stream_id)?.next_u64())
    }

    pub fn stream(&mut self, stream_id: u64) -> Result<&mut ChaCha8Rng, SimError> {
        self.streams
            .get_mut(&stream_id)
            .ok_or(SimError::UnknownStream(stream_id))
    }
}
