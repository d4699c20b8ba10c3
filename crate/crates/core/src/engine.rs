//! Deterministic discrete-event core.
//!
//! Virtual time is a real-valued count of seconds. Events are totally
//! ordered by `(fire_at, seq)` where `seq` is a per-engine insertion counter,
//! so simultaneous events fire in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Virtual seconds.
pub type SimTime = f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("event scheduled in the past: fire_at {fire_at} < now {now}")]
    InPast { fire_at: SimTime, now: SimTime },
    #[error("event time is not finite: {0}")]
    NotFinite(SimTime),
    #[error("run horizon {t_end} precedes current time {now}")]
    HorizonInPast { t_end: SimTime, now: SimTime },
}

/// Identifier returned by [`Engine::schedule`]; equal to the event's sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: E,
}

impl<E> PartialEq for Event<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq && self.fire_at.total_cmp(&other.fire_at) == Ordering::Equal
    }
}

impl<E> Eq for Event<E> {}

impl<E> PartialOrd for Event<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Event<E> {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .total_cmp(&self.fire_at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Virtual clock plus pending-event queue.
#[derive(Debug)]
pub struct Engine<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event<E>>,
    processed: u64,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Self {
            now: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total events dispatched over the engine's lifetime.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn schedule(&mut self, fire_at: SimTime, kind: E) -> Result<EventId, EngineError> {
        if !fire_at.is_finite() {
            return Err(EngineError::NotFinite(fire_at));
        }
        if fire_at < self.now {
            return Err(EngineError::InPast {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { fire_at, seq, kind });
        Ok(EventId(seq))
    }

    /// Schedules `kind` at `now + delay`. Negative delays are clamped to zero.
    pub fn schedule_in(&mut self, delay: SimTime, kind: E) -> EventId {
        let at = self.now + delay.max(0.0);
        self.schedule(at, kind)
            .expect("relative schedule with finite delay cannot be in the past")
    }

    /// Pops the next event with `fire_at <= t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<E>> {
        match self.queue.peek() {
            Some(ev) if ev.fire_at <= t_end => {
                let ev = self.queue.pop().expect("peeked");
                debug_assert!(ev.fire_at >= self.now);
                self.now = ev.fire_at;
                self.processed += 1;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Processes every event with `fire_at <= t_end` in `(fire_at, seq)` order,
    /// then sets the clock to `t_end`. Returns the number of events handled.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<u64, EngineError>
    where
        F: FnMut(&mut Engine<E>, Event<E>),
    {
        if t_end < self.now {
            return Err(EngineError::HorizonInPast { t_end, now: self.now });
        }
        let mut count = 0;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
            count += 1;
        }
        self.now = t_end;
        Ok(count)
    }
}

/// Purpose label of a random stream. Each purpose draws from its own
/// generator so extra draws in one subsystem never shift another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Placement,
    Mobility,
    PacketLoss,
    Workload,
    Hardware,
    Background,
}

impl StreamId {
    fn salt(self) -> u64 {
        match self {
            StreamId::Placement => 0x706c_6163_656d_6e74,
            StreamId::Mobility => 0x6d6f_6269_6c69_7479,
            StreamId::PacketLoss => 0x7061_636b_6c6f_7373,
            StreamId::Workload => 0x776f_726b_6c6f_6164,
            StreamId::Hardware => 0x6861_7264_7761_7265,
            StreamId::Background => 0x6267_7472_6166_6663,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Portable seeded generator for one `(seed, stream)` pair.
pub fn rng_stream(seed: u64, stream: StreamId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ stream.salt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_time_events_are_fifo() {
        let mut e = Engine::new();
        e.schedule(5.0, "A").unwrap();
        e.schedule(5.0, "B").unwrap();
        e.schedule(1.0, "first").unwrap();
        let mut seen = vec![];
        e.run_until(10.0, |_, ev| seen.push(ev.kind)).unwrap();
        assert_eq!(seen, vec!["first", "A", "B"]);
    }

    #[test]
    fn schedule_at_now_precedes_later_events() {
        let mut e = Engine::new();
        e.schedule(3.0, 1).unwrap();
        e.run_until(2.0, |_, _| {}).unwrap();
        e.schedule(2.0, 0).unwrap();
        let mut seen = vec![];
        e.run_until(5.0, |_, ev| seen.push(ev.kind)).unwrap();
        assert_eq!(seen, vec![0, 1]);
    }

    #[test]
    fn past_event_rejected() {
        let mut e: Engine<()> = Engine::new();
        e.run_until(10.0, |_, _| {}).unwrap();
        assert!(matches!(e.schedule(9.0, ()), Err(EngineError::InPast { .. })));
        assert!(e.schedule(f64::NAN, ()).is_err());
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut e: Engine<()> = Engine::new();
        assert_eq!(e.run_until(10.0, |_, _| {}).unwrap(), 0);
        assert_eq!(e.now(), 10.0);
        assert!(e.run_until(5.0, |_, _| {}).is_err());
    }

    #[test]
    fn horizon_is_inclusive() {
        let mut e = Engine::new();
        for t in [1.0, 2.0, 3.0] {
            e.schedule(t, t).unwrap();
        }
        assert_eq!(e.run_until(2.0, |_, _| {}).unwrap(), 2);
        assert_eq!(e.now(), 2.0);
        assert_eq!(e.pending(), 1);
    }

    #[test]
    fn handlers_can_schedule_follow_ups() {
        let mut e = Engine::new();
        e.schedule(0.0, 0u32).unwrap();
        let mut trace = vec![];
        e.run_until(10.0, |eng, ev| {
            trace.push((eng.now(), ev.kind));
            if ev.kind < 4 {
                eng.schedule_in(2.0, ev.kind + 1);
            }
        })
        .unwrap();
        assert_eq!(trace, vec![(0.0, 0), (2.0, 1), (4.0, 2), (6.0, 3), (8.0, 4)]);
    }

    #[test]
    fn streams_are_reproducible_and_independent() {
        let a: Vec<u64> = (0..8).map({
            let mut r = rng_stream(7, StreamId::Mobility);
            move |_| r.gen()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = rng_stream(7, StreamId::Mobility);
            move |_| r.gen()
        }).collect();
        let c: Vec<u64> = (0..8).map({
            let mut r = rng_stream(7, StreamId::PacketLoss);
            move |_| r.gen()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
