//! Deterministic link emulation: a FIFO serialization queue at a fixed
//! bandwidth, a constant one-way propagation delay and a stochastic loss
//! process applied as packets leave the queue.
//!
//! Time is continuous `f64` milliseconds. Events at equal times run in the
//! order they were scheduled, except that events scheduled with
//! [`EventQueue::schedule_late`] run after all ordinary events of their
//! instant.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::{TraceRecord, Tracer};
use crate::transport::Packet;

struct Entry<E> {
    time: f64,
    late: bool,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap: invert so the earliest (time, late, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.late.cmp(&self.late))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Time-ordered event queue with FIFO tie-breaking.
pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    now: f64,
    next_seq: u64,
    processed: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: 0.0,
            next_seq: 0,
            processed: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
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

    /// # Panics
    ///
    /// Scheduling before the current simulation time is a logic error and
    /// aborts the run. The same holds for [`schedule_late`](Self::schedule_late).
    pub fn schedule(&mut self, time: f64, event: E) {
        self.push(time, false, event);
    }

    /// Like [`schedule`](Self::schedule), but runs after every ordinary
    /// event at the same instant, including ones scheduled later.
    pub fn schedule_late(&mut self, time: f64, event: E) {
        self.push(time, true, event);
    }

    fn push(&mut self, time: f64, late: bool, event: E) {
        assert!(
            time >= self.now && !time.is_nan(),
            "event scheduled in the past: {time} < {}",
            self.now
        );
        self.heap.push(Entry {
            time,
            late,
            seq: self.next_seq,
            event,
        });
        self.next_seq += 1;
    }

    /// Pops the next event if it is due at or before `t_end`.
    pub fn pop_until(&mut self, t_end: f64) -> Option<(f64, E)> {
        if self.heap.peek()?.time > t_end {
            return None;
        }
        let Entry { time, event, .. } = self.heap.pop()?;
        self.now = time;
        self.processed += 1;
        Some((time, event))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossModel {
    /// Independent per-packet loss.
    Bernoulli { p: f64 },
    /// Two-state bursty loss: `p` in the good state, `loss_in_bad` in the
    /// bad state, with per-packet transition probabilities.
    GilbertElliott {
        p: f64,
        p_good_to_bad: f64,
        p_bad_to_good: f64,
        loss_in_bad: f64,
    },
}

impl LossModel {
    pub fn none() -> Self {
        LossModel::Bernoulli { p: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let probs: &[(&'static str, f64)] = match self {
            LossModel::Bernoulli { p } => &[("loss", *p)],
            LossModel::GilbertElliott {
                p,
                p_good_to_bad,
                p_bad_to_good,
                loss_in_bad,
            } => &[
                ("loss", *p),
                ("p_good_to_bad", *p_good_to_bad),
                ("p_bad_to_good", *p_bad_to_good),
                ("loss_in_bad", *loss_in_bad),
            ],
        };
        for &(name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Long-run packet loss rate.
    pub fn mean_loss_rate(&self) -> f64 {
        match *self {
            LossModel::Bernoulli { p } => p,
            LossModel::GilbertElliott {
                p,
                p_good_to_bad,
                p_bad_to_good,
                loss_in_bad,
            } => {
                let total = p_good_to_bad + p_bad_to_good;
                if total == 0.0 {
                    return p;
                }
                let bad = p_good_to_bad / total;
                p * (1.0 - bad) + loss_in_bad * bad
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub bandwidth_bps: f64,
    pub one_way_delay_ms: f64,
    pub loss: LossModel,
    /// `None` is an unbounded queue.
    pub queue_cap_bits: Option<f64>,
    pub seed: u64,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_bps.is_finite() && self.bandwidth_bps > 0.0) {
            return Err(Error::param("bandwidth", "must be positive"));
        }
        if !(self.one_way_delay_ms.is_finite() && self.one_way_delay_ms >= 0.0) {
            return Err(Error::param("one_way_delay_ms", "must be non-negative"));
        }
        if let Some(cap) = self.queue_cap_bits {
            if cap.is_nan() || cap <= 0.0 {
                return Err(Error::param("queue_cap", "must be positive"));
            }
        }
        self.loss.validate()
    }
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            bandwidth_bps: 10e6,
            one_way_delay_ms: 30.0,
            loss: LossModel::none(),
            queue_cap_bits: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnqueueOutcome {
    Accepted { drain_ts: f64 },
    DroppedOverflow,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkStats {
    pub offered_packets: u64,
    pub offered_bits: f64,
    pub overflow_packets: u64,
    pub overflow_bits: f64,
    pub lost_packets: u64,
    pub lost_bits: f64,
    pub delivered_packets: u64,
    pub delivered_bits: f64,
}

/// One direction of a bottleneck link.
#[derive(Debug, Clone)]
pub struct Link {
    config: LinkConfig,
    rng: ChaCha8Rng,
    in_bad_state: bool,
    busy_until: f64,
    backlog: VecDeque<(f64, f64)>,
    backlog_bits: f64,
    stats: LinkStats,
}

impl Link {
    pub fn new(config: LinkConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            in_bad_state: false,
            busy_until: 0.0,
            backlog: VecDeque::new(),
            backlog_bits: 0.0,
            stats: LinkStats::default(),
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    pub fn serialization_ms(&self, bits: f64) -> f64 {
        bits / self.config.bandwidth_bps * 1000.0
    }

    /// Bits waiting or in service at `now`.
    pub fn queued_bits(&mut self, now: f64) -> f64 {
        while let Some(&(drain_ts, bits)) = self.backlog.front() {
            if drain_ts > now {
                break;
            }
            self.backlog.pop_front();
            self.backlog_bits -= bits;
        }
        if self.backlog.is_empty() {
            self.backlog_bits = 0.0;
        }
        self.backlog_bits
    }

    /// Puts `bits` at the tail of the FIFO. The returned drain time is when
    /// its last bit leaves the queue.
    pub fn enqueue(&mut self, bits: f64, now: f64) -> EnqueueOutcome {
        self.stats.offered_packets += 1;
        self.stats.offered_bits += bits;
        let queued = self.queued_bits(now);
        if let Some(cap) = self.config.queue_cap_bits {
            if queued + bits > cap {
                self.stats.overflow_packets += 1;
                self.stats.overflow_bits += bits;
                return EnqueueOutcome::DroppedOverflow;
            }
        }
        let drain_ts = self.busy_until.max(now) + self.serialization_ms(bits);
        self.busy_until = drain_ts;
        self.backlog.push_back((drain_ts, bits));
        self.backlog_bits += bits;
        EnqueueOutcome::Accepted { drain_ts }
    }

    /// Samples the loss process once for a packet leaving the queue at
    /// `drain_ts`; survivors arrive one propagation delay later.
    pub fn deliver(&mut self, bits: f64, drain_ts: f64) -> Option<f64> {
        let lost = self.sample_loss();
        if lost {
            self.stats.lost_packets += 1;
            self.stats.lost_bits += bits;
            None
        } else {
            self.stats.delivered_packets += 1;
            self.stats.delivered_bits += bits;
            Some(drain_ts + self.config.one_way_delay_ms)
        }
    }

    fn sample_loss(&mut self) -> bool {
        match self.config.loss {
            LossModel::Bernoulli { p } => p > 0.0 && self.rng.random::<f64>() < p,
            LossModel::GilbertElliott {
                p,
                p_good_to_bad,
                p_bad_to_good,
                loss_in_bad,
            } => {
                let flip = if self.in_bad_state { p_bad_to_good } else { p_good_to_bad };
                if self.rng.random::<f64>() < flip {
                    self.in_bad_state = !self.in_bad_state;
                }
                let p_loss = if self.in_bad_state { loss_in_bad } else { p };
                self.rng.random::<f64>() < p_loss
            }
        }
    }
}

#[derive(Debug, Clone)]
enum LinkEvent {
    Enqueue(Packet),
    Drain(Packet),
    Arrive(Packet),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkRunStats {
    pub events_processed: u64,
    pub link: LinkStats,
    /// `(seq, arrival_ts)` in arrival order.
    pub arrivals: Vec<(u64, f64)>,
}

/// Packets pushed through a single link with no endpoints attached.
pub struct LinkSimulation {
    queue: EventQueue<LinkEvent>,
    link: Link,
    tracer: Tracer,
    arrivals: Vec<(u64, f64)>,
}

impl LinkSimulation {
    pub fn new(config: LinkConfig, trace: bool) -> Result<Self> {
        Ok(Self {
            queue: EventQueue::new(),
            link: Link::new(config)?,
            tracer: if trace { Tracer::enabled() } else { Tracer::disabled() },
            arrivals: Vec::new(),
        })
    }

    pub fn send(&mut self, pkt: Packet, at: f64) {
        self.queue.schedule(at, LinkEvent::Enqueue(pkt));
    }

    pub fn run_until(&mut self, t_end: f64) -> LinkRunStats {
        while let Some((now, ev)) = self.queue.pop_until(t_end) {
            match ev {
                LinkEvent::Enqueue(pkt) => {
                    let outcome = self.link.enqueue(pkt.payload_bits, now);
                    self.tracer.record(now, "enqueue", Some(pkt.seq), Some(pkt.frame_id), || {
                        format!("{outcome:?}")
                    });
                    if let EnqueueOutcome::Accepted { drain_ts } = outcome {
                        self.queue.schedule(drain_ts, LinkEvent::Drain(pkt));
                    }
                }
                LinkEvent::Drain(pkt) => {
                    let arrival = self.link.deliver(pkt.payload_bits, now);
                    self.tracer.record(now, "drain", Some(pkt.seq), Some(pkt.frame_id), || {
                        if arrival.is_some() { "delivered" } else { "lost" }.to_string()
                    });
                    if let Some(at) = arrival {
                        self.queue.schedule(at, LinkEvent::Arrive(pkt));
                    }
                }
                LinkEvent::Arrive(pkt) => {
                    self.tracer
                        .record(now, "arrive", Some(pkt.seq), Some(pkt.frame_id), String::new);
                    self.arrivals.push((pkt.seq, now));
                }
            }
        }
        LinkRunStats {
            events_processed: self.queue.processed(),
            link: *self.link.stats(),
            arrivals: self.arrivals.clone(),
        }
    }

    pub fn into_trace(self) -> Vec<TraceRecord> {
        self.tracer.into_records()
    }
}
