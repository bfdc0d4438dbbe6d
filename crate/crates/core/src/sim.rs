//! Discrete-event engine: simulation time, a time-ordered event queue with
//! FIFO tie-breaking, and the seeded random stream.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Simulation time in seconds. Never NaN, never negative.
#[derive(Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on NaN, infinity or negative input.
    pub fn new(seconds: f64) -> Self {
        assert!(
            seconds.is_finite() && seconds >= 0.0,
            "invalid simulation time {seconds}"
        );
        SimTime(seconds)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn after(self, delay: f64) -> Self {
        SimTime::new(self.0 + delay)
    }
}

impl TryFrom<f64> for SimTime {
    type Error = String;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        if value.is_finite() && value >= 0.0 {
            Ok(SimTime(value))
        } else {
            Err(format!("invalid simulation time {value}"))
        }
    }
}

impl From<SimTime> for f64 {
    fn from(t: SimTime) -> f64 {
        t.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

/// Handle returned by [`EventQueue::schedule`]; identifies the event by its
/// insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(pub u64);

struct Scheduled<E> {
    fire_at: SimTime,
    seq: u64,
    kind: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed so the max-heap pops the earliest (fire_at, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Future event set ordered by `(fire_at, seq)`.
pub struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    next_seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Time of the next pending event, if any.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|s| s.fire_at)
    }

    /// Enqueues `kind` to fire at `at`.
    ///
    /// Panics if `at` lies before the current simulation time.
    pub fn schedule(&mut self, at: SimTime, kind: E) -> EventHandle {
        assert!(
            at >= self.now,
            "event scheduled in the past: {at:?} < now {:?}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled {
            fire_at: at,
            seq,
            kind,
        });
        EventHandle(seq)
    }

    /// Schedules `kind` at `now + delay`.
    pub fn schedule_in(&mut self, delay: f64, kind: E) -> EventHandle {
        let at = self.now.after(delay);
        self.schedule(at, kind)
    }

    /// Removes the next event if it fires at or before `horizon`, advancing
    /// the clock to its timestamp.
    pub fn pop_until(&mut self, horizon: SimTime) -> Option<(SimTime, EventHandle, E)> {
        if self.heap.peek()?.fire_at > horizon {
            return None;
        }
        let ev = self.heap.pop().expect("peeked");
        self.now = ev.fire_at;
        Some((ev.fire_at, EventHandle(ev.seq), ev.kind))
    }

    /// Dispatches every event with `fire_at <= horizon` in `(fire_at, seq)`
    /// order, including events scheduled by the handler itself. Afterwards the
    /// clock reads `horizon`. Returns the number of dispatched events.
    pub fn run_until<F>(&mut self, horizon: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut EventQueue<E>, SimTime, E),
    {
        assert!(
            horizon >= self.now,
            "horizon {horizon:?} lies before now {:?}",
            self.now
        );
        let mut dispatched = 0;
        while let Some((at, _, kind)) = self.pop_until(horizon) {
            handler(self, at, kind);
            dispatched += 1;
        }
        self.now = horizon;
        dispatched
    }
}

/// The single seeded random stream of a simulation run.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Draws uniformly from `[lo, hi)`.
    pub fn uniform_jitter(&mut self, lo: f64, hi: f64) -> f64 {
        assert!(0.0 <= lo && lo < hi, "invalid jitter interval [{lo}, {hi})");
        self.rng.gen_range(lo..hi)
    }
}
