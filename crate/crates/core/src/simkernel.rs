//! Deterministic discrete-event kernel.
//!
//! Virtual time is an integer count of microseconds. Events are ordered by
//! `(at, seq)` where `seq` is the insertion sequence number, so two events
//! scheduled for the same instant fire in the order they were scheduled.
//! A run is driven by a [`Model`] that reacts to each event by mutating its
//! own state and scheduling further events through a [`Context`].

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Virtual time in microsecond ticks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Rounds up to the next whole tick.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * 1e6).ceil().max(0.0) as u64)
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-6
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    ScheduledInPast { at: SimTime, now: SimTime },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<K> {
    pub at: SimTime,
    pub seq: u64,
    pub kind: K,
}

/// Heap entry; ordering ignores the payload.
struct Slot<K>(Event<K>);

impl<K> PartialEq for Slot<K> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.at, self.0.seq) == (other.0.at, other.0.seq)
    }
}
impl<K> Eq for Slot<K> {}
impl<K> PartialOrd for Slot<K> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<K> Ord for Slot<K> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.0.at, self.0.seq).cmp(&(other.0.at, other.0.seq))
    }
}

/// Priority queue of pending events plus the virtual clock.
pub struct EventQueue<K> {
    heap: BinaryHeap<Reverse<Slot<K>>>,
    cancelled: HashSet<u64>,
    now: SimTime,
    next_seq: u64,
    scheduled: u64,
    processed: u64,
    dropped: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            scheduled: 0,
            processed: 0,
            dropped: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `kind` at `at` and returns the assigned sequence number.
    pub fn schedule(&mut self, at: SimTime, kind: K) -> Result<u64, SimError> {
        if at < self.now {
            return Err(SimError::ScheduledInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.heap.push(Reverse(Slot(Event { at, seq, kind })));
        Ok(seq)
    }

    /// Marks a pending event as cancelled. It will be discarded instead of
    /// being returned by [`pop`](Self::pop).
    pub fn cancel(&mut self, seq: u64) {
        self.cancelled.insert(seq);
    }

    fn skip_cancelled(&mut self) {
        while let Some(Reverse(Slot(top))) = self.heap.peek() {
            if !self.cancelled.remove(&top.seq) {
                break;
            }
            self.heap.pop();
            self.dropped += 1;
        }
    }

    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.skip_cancelled();
        self.heap.peek().map(|Reverse(Slot(e))| e.at)
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event<K>> {
        self.skip_cancelled();
        let Reverse(Slot(ev)) = self.heap.pop()?;
        self.now = ev.at;
        self.processed += 1;
        Some(ev)
    }

    /// Pending events, excluding cancelled ones that are still in the heap.
    pub fn pending(&self) -> u64 {
        self.heap.iter().filter(|Reverse(Slot(e))| !self.cancelled.contains(&e.seq)).count() as u64
    }

    pub fn scheduled_count(&self) -> u64 {
        self.scheduled
    }

    pub fn processed_count(&self) -> u64 {
        self.processed
    }

    /// Cancelled events discarded so far, plus cancelled ones still queued.
    pub fn cancelled_count(&self) -> u64 {
        self.dropped + self.cancelled.len() as u64
    }
}

/// One line of a trace dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub at: SimTime,
    pub actor: String,
    pub kind: String,
    pub details: String,
}

impl TraceEntry {
    pub fn new(at: SimTime, actor: impl Into<String>, kind: impl Into<String>, details: impl Into<String>) -> Self {
        TraceEntry { at, actor: actor.into(), kind: kind.into(), details: details.into() }
    }
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.at, self.actor, self.kind, self.details)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    pub entries: Vec<TraceEntry>,
}

impl EventTrace {
    pub fn push(&mut self, entry: TraceEntry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceEntry> + 'a {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    /// Tab-separated dump, one entry per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn extend(&mut self, other: EventTrace) {
        self.entries.extend(other.entries);
    }
}

/// Handle given to a [`Model`] while it processes one event.
pub struct Context<'a, K> {
    queue: &'a mut EventQueue<K>,
    notes: Vec<TraceEntry>,
    error: Option<SimError>,
}

impl<K> Context<'_, K> {
    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    /// Schedules an event at an absolute time. Scheduling into the past is
    /// recorded and aborts the run once the handler returns.
    pub fn schedule_at(&mut self, at: SimTime, kind: K) -> Option<u64> {
        match self.queue.schedule(at, kind) {
            Ok(seq) => Some(seq),
            Err(e) => {
                self.error.get_or_insert(e);
                None
            }
        }
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> Option<u64> {
        let at = self.now() + delay;
        self.schedule_at(at, kind)
    }

    pub fn cancel(&mut self, seq: u64) {
        self.queue.cancel(seq);
    }

    /// Adds a derived trace line (frame transmissions, state changes).
    pub fn note(&mut self, actor: impl Into<String>, kind: impl Into<String>, details: impl Into<String>) {
        let at = self.now();
        self.notes.push(TraceEntry::new(at, actor, kind, details));
    }
}

/// Event-driven state machine run by [`run_until`].
pub trait Model {
    type Event;

    /// Renders the event itself as `(actor, kind, details)` for the trace.
    /// `None` keeps the event out of the trace (internal timers).
    fn describe(&self, event: &Self::Event) -> Option<(String, String, String)>;

    fn handle(&mut self, event: Self::Event, ctx: &mut Context<'_, Self::Event>);
}

/// Processes every event with `at <= t_end`. Each processed event is traced
/// first, followed by any notes its handler emitted.
pub fn run_until<M: Model>(
    queue: &mut EventQueue<M::Event>,
    model: &mut M,
    t_end: SimTime,
) -> Result<EventTrace, SimError> {
    let mut trace = EventTrace::default();
    while let Some(at) = queue.peek_time() {
        if at > t_end {
            break;
        }
        let ev = queue.pop().expect("peeked event present");
        if let Some((actor, kind, details)) = model.describe(&ev.kind) {
            trace.push(TraceEntry::new(ev.at, actor, kind, details));
        }
        let mut ctx = Context { queue: &mut *queue, notes: Vec::new(), error: None };
        model.handle(ev.kind, &mut ctx);
        let Context { notes, error, .. } = ctx;
        if let Some(e) = error {
            log::error!("aborting run at {}: {}", ev.at, e);
            return Err(e);
        }
        trace.entries.extend(notes);
    }
    Ok(trace)
}

/// Named, seeded random stream. The same `(seed, label)` yields the same
/// draw sequence on every platform.
pub struct RngStream {
    pub seed: u64,
    pub label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        RngStream { seed, label: label.to_string(), rng: ChaCha8Rng::seed_from_u64(stream_key(seed, label)) }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

impl rand::RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// FNV-1a over the label, mixed with the seed through splitmix64.
fn stream_key(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
