//! Discrete-event engine: simulation clock and `(fire_at, seq)`-ordered queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Seconds since run start. Always finite and non-negative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn new(seconds: f64) -> Result<Self, SimError> {
        if seconds.is_finite() && seconds >= 0.0 {
            Ok(SimTime(seconds))
        } else {
            Err(SimError::InvalidTime(seconds))
        }
    }

    #[inline]
    pub fn seconds(self) -> f64 {
        self.0
    }

    /// `self + delta`, saturating to the largest finite time.
    pub fn after(self, delta_s: f64) -> SimTime {
        let t = self.0 + delta_s.max(0.0);
        SimTime(if t.is_finite() { t } else { f64::MAX })
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

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}s", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventHandle {
    pub fire_at: SimTime,
    pub seq: u64,
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}
impl<P> Eq for Entry<P> {}
impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

pub struct EventQueue<P> {
    clock: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<P>>,
    processed: u64,
    log: Option<Vec<String>>,
}

impl<P: fmt::Debug> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: fmt::Debug> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            clock: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            processed: 0,
            log: None,
        }
    }

    /// Record `time seq payload` for every processed event.
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn event_log(&self) -> Option<&[String]> {
        self.log.as_deref()
    }

    pub fn take_event_log(&mut self) -> Option<Vec<String>> {
        self.log.take()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.fire_at)
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<EventHandle, SimError> {
        if fire_at < self.clock {
            return Err(SimError::ScheduleInPast {
                at: fire_at.seconds(),
                clock: self.clock.seconds(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event {
            fire_at,
            seq,
            payload,
        }));
        Ok(EventHandle { fire_at, seq })
    }

    pub fn schedule_in(&mut self, delay_s: f64, payload: P) -> Result<EventHandle, SimError> {
        let at = self.clock.after(delay_s);
        self.schedule(at, payload)
    }

    /// Process every event with `fire_at <= t_end` in order, then set the
    /// clock to `t_end`. Handlers may schedule further events.
    pub fn run_until<F, E>(&mut self, t_end: SimTime, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Self, Event<P>) -> Result<(), E>,
        E: fmt::Display,
    {
        if t_end < self.clock {
            return Err(SimError::ScheduleInPast {
                at: t_end.seconds(),
                clock: self.clock.seconds(),
            });
        }
        let mut count = 0;
        while let Some(next) = self.peek_time() {
            if next > t_end {
                break;
            }
            let Entry(ev) = self.heap.pop().expect("peeked");
            self.clock = ev.fire_at;
            let diag = format!("{:?}", ev.payload);
            if let Some(log) = self.log.as_mut() {
                log.push(format!("{:.6} {} {}", ev.fire_at.seconds(), ev.seq, diag));
            }
            let (t, seq) = (ev.fire_at, ev.seq);
            handler(self, ev).map_err(|e| SimError::HandlerFailed {
                time: t.seconds(),
                seq,
                payload: diag,
                message: e.to_string(),
            })?;
            self.processed += 1;
            count += 1;
        }
        self.clock = t_end;
        Ok(count)
    }
}
