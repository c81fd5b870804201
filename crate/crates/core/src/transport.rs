//! Sender packetization, receiver reassembly, NACK loss detection and the
//! MLLM frame sampler.
//!
//! The sampler takes one frame per sampling slot. When the frame captured at
//! the slot instant is not fully received once its first transmission is
//! due (plus an optional grace), it falls back to an older complete frame of the same slot instead of waiting for
//! retransmission. Only when no candidate is complete does the slot stall.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::allocator::FrameBudget;
use crate::error::{Error, Result};

/// Default MTU payload, 1,400 bytes.
pub const DEFAULT_MTU_PAYLOAD_BITS: f64 = 1400.0 * 8.0;

/// Slack for comparing capture and sampling instants built from repeated
/// float intervals (`15 × 1000/30` is not exactly 500).
pub(crate) const TS_SLACK_MS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Frame {
    pub frame_id: u64,
    pub capture_ts: f64,
    pub size_bits: f64,
    pub budget: Option<Arc<FrameBudget>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub seq: u64,
    pub frame_id: u64,
    pub index: u32,
    pub count: u32,
    pub payload_bits: f64,
    pub capture_ts: f64,
    pub send_ts: f64,
    pub is_retransmit: bool,
}

/// Number of MTU payloads needed for `size_bits`; at least one.
pub fn packet_count(size_bits: f64, mtu_payload_bits: f64) -> u32 {
    let mut count = (size_bits / mtu_payload_bits).ceil().max(1.0);
    if count > 1.0 && (count - 1.0) * mtu_payload_bits >= size_bits {
        count -= 1.0;
    }
    count as u32
}

/// Splits a frame into MTU-sized packets with consecutive sequence numbers
/// starting at `first_seq`. The last packet carries the remainder.
pub fn packetize(frame: &Frame, first_seq: u64, mtu_payload_bits: f64, now: f64) -> Result<Vec<Packet>> {
    if !(frame.size_bits.is_finite() && frame.size_bits > 0.0) {
        return Err(Error::param("size_bits", "frame must carry at least one bit"));
    }
    if !(mtu_payload_bits.is_finite() && mtu_payload_bits > 0.0) {
        return Err(Error::param("mtu_payload_bits", "must be positive"));
    }
    let count = packet_count(frame.size_bits, mtu_payload_bits);
    let packets = (0..count)
        .map(|index| {
            let payload_bits = if index + 1 == count {
                frame.size_bits - f64::from(count - 1) * mtu_payload_bits
            } else {
                mtu_payload_bits
            };
            Packet {
                seq: first_seq + u64::from(index),
                frame_id: frame.frame_id,
                index,
                count,
                payload_bits,
                capture_ts: frame.capture_ts,
                send_ts: now,
                is_retransmit: false,
            }
        })
        .collect();
    Ok(packets)
}

/// Frame capture schedule at a (changeable) frame rate.
///
/// A requested rate takes effect right after the next capture, and the
/// schedule restarts its phase from that capture instant.
#[derive(Debug, Clone)]
pub struct CaptureClock {
    rate: f64,
    anchor: f64,
    n: u64,
    pending: Option<f64>,
}

impl CaptureClock {
    pub fn new(rate: f64, start_ts: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            rate,
            anchor: start_ts,
            n: 0,
            pending: None,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn interval_ms(&self) -> f64 {
        1000.0 / self.rate
    }

    pub fn next_capture_ts(&self) -> f64 {
        self.anchor + self.n as f64 * self.interval_ms()
    }

    pub fn request_rate(&mut self, rate: f64) -> Result<()> {
        check_rate(rate)?;
        self.pending = Some(rate);
        Ok(())
    }

    /// Consumes the pending capture and returns its timestamp.
    pub fn capture(&mut self) -> f64 {
        let ts = self.next_capture_ts();
        match self.pending.take() {
            Some(rate) if rate != self.rate => {
                self.rate = rate;
                self.anchor = ts;
                self.n = 1;
            }
            _ => self.n += 1,
        }
        ts
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(Error::param("frame rate", format!("{rate} is not a positive rate")))
    }
}

#[derive(Debug, Clone)]
struct FrameSlot {
    capture_ts: f64,
    first_seq: u64,
    count: u32,
    received: Vec<bool>,
    n_received: u32,
    completion_ts: Option<f64>,
    due_ts: Option<f64>,
}

impl FrameSlot {
    fn new(capture_ts: f64, first_seq: u64, count: u32) -> Self {
        Self {
            capture_ts,
            first_seq,
            count,
            received: vec![false; count as usize],
            n_received: 0,
            completion_ts: None,
            due_ts: None,
        }
    }
}

/// Read-only view of one frame's reassembly state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStatus {
    pub frame_id: u64,
    pub capture_ts: f64,
    pub first_seq: u64,
    pub count: u32,
    pub received: u32,
    pub completion_ts: Option<f64>,
    /// When the first transmission of every packet will have landed if
    /// none is lost.
    pub due_ts: Option<f64>,
}

impl FrameStatus {
    pub fn complete_by(&self, t: f64) -> bool {
        // tolerate float noise when completion lands exactly on the deadline
        self.completion_ts.is_some_and(|c| c <= t + TS_SLACK_MS)
    }
}

/// Receiver-side frame assembly.
#[derive(Debug, Clone, Default)]
pub struct Reassembler {
    frames: BTreeMap<u64, FrameSlot>,
    duplicates: u64,
    stale: u64,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a frame from its timing metadata before any packet arrives,
    /// so a fully lost frame is still known to exist.
    pub fn announce(&mut self, frame_id: u64, capture_ts: f64, first_seq: u64, count: u32) {
        self.frames
            .entry(frame_id)
            .or_insert_with(|| FrameSlot::new(capture_ts, first_seq, count));
    }

    /// Sets when the frame's first transmission is due in full. The sampler
    /// waits for this before judging the frame.
    pub fn set_due(&mut self, frame_id: u64, due_ts: f64) {
        if let Some(slot) = self.frames.get_mut(&frame_id) {
            slot.due_ts = Some(due_ts);
        }
    }

    /// Records a packet; returns the frame id when this packet completes it.
    ///
    /// Duplicates and packets inconsistent with the frame's known layout are
    /// counted and otherwise ignored.
    pub fn on_packet_arrival(&mut self, pkt: &Packet, now: f64) -> Option<u64> {
        let slot = self.frames.entry(pkt.frame_id).or_insert_with(|| {
            FrameSlot::new(pkt.capture_ts, pkt.seq - u64::from(pkt.index), pkt.count)
        });
        if pkt.count != slot.count || pkt.index >= slot.count {
            self.stale += 1;
            return None;
        }
        let got = &mut slot.received[pkt.index as usize];
        if *got {
            self.duplicates += 1;
            return None;
        }
        *got = true;
        slot.n_received += 1;
        if slot.n_received == slot.count {
            slot.completion_ts = Some(now);
            Some(pkt.frame_id)
        } else {
            None
        }
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn stale(&self) -> u64 {
        self.stale
    }

    pub fn frame(&self, frame_id: u64) -> Option<FrameStatus> {
        self.frames.get(&frame_id).map(|s| status(frame_id, s))
    }

    pub fn frames(&self) -> impl DoubleEndedIterator<Item = FrameStatus> + '_ {
        self.frames.iter().map(|(&id, s)| status(id, s))
    }

    /// First sequence number of the oldest known frame captured after
    /// `capture_ts`, or one past the last known sequence number.
    pub fn first_seq_after(&self, capture_ts: f64) -> Option<u64> {
        self.frames
            .values()
            .find(|s| s.capture_ts > capture_ts + TS_SLACK_MS)
            .map(|s| s.first_seq)
            .or_else(|| {
                self.frames
                    .values()
                    .next_back()
                    .map(|s| s.first_seq + u64::from(s.count))
            })
    }
}

fn status(frame_id: u64, s: &FrameSlot) -> FrameStatus {
    FrameStatus {
        frame_id,
        capture_ts: s.capture_ts,
        first_seq: s.first_seq,
        count: s.count,
        received: s.n_received,
        completion_ts: s.completion_ts,
        due_ts: s.due_ts,
    }
}

#[derive(Debug, Clone, Copy)]
struct MissingSeq {
    detected_ts: f64,
    last_nack_ts: Option<f64>,
}

/// Sequence-gap loss detection with rate-limited NACK rounds.
///
/// A sequence number is considered missing once a higher one has arrived.
/// It is NACKed after it has been missing for `nack_delay`, and again at
/// most once per RTT while it stays missing.
#[derive(Debug, Clone, Default)]
pub struct LossDetector {
    received: Vec<bool>,
    highest_seen: Option<u64>,
    missing: BTreeMap<u64, MissingSeq>,
    abandoned_below: u64,
}

impl LossDetector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an arrival; returns how many new gaps it revealed.
    pub fn on_arrival(&mut self, seq: u64, now: f64) -> usize {
        let idx = seq as usize;
        if idx >= self.received.len() {
            self.received.resize(idx + 1, false);
        }
        self.received[idx] = true;
        self.missing.remove(&seq);

        let from = match self.highest_seen {
            Some(h) if seq <= h => return 0,
            Some(h) => h + 1,
            None => 0,
        };
        self.highest_seen = Some(seq);
        let mut new_gaps = 0;
        for s in from.max(self.abandoned_below)..seq {
            if !self.received[s as usize] {
                self.missing.insert(
                    s,
                    MissingSeq {
                        detected_ts: now,
                        last_nack_ts: None,
                    },
                );
                new_gaps += 1;
            }
        }
        new_gaps
    }

    pub fn highest_seen(&self) -> Option<u64> {
        self.highest_seen
    }

    pub fn missing(&self) -> impl Iterator<Item = u64> + '_ {
        self.missing.keys().copied()
    }

    /// Sequence numbers due for a NACK at `now`; marks them as NACKed.
    pub fn detect_losses(&mut self, now: f64, nack_delay: f64, rtt: f64) -> Vec<u64> {
        let mut due = Vec::new();
        for (&seq, m) in self.missing.iter_mut() {
            let ready = match m.last_nack_ts {
                None => m.detected_ts + nack_delay <= now,
                Some(last) => last + rtt <= now,
            };
            if ready {
                m.last_nack_ts = Some(now);
                due.push(seq);
            }
        }
        due
    }

    /// Earliest time at which some missing sequence becomes due.
    pub fn next_due(&self, nack_delay: f64, rtt: f64) -> Option<f64> {
        self.missing
            .values()
            .map(|m| match m.last_nack_ts {
                None => m.detected_ts + nack_delay,
                Some(last) => last + rtt,
            })
            .min_by(f64::total_cmp)
    }

    /// Stops tracking every sequence number below `bound`.
    pub fn abandon_below(&mut self, bound: u64) {
        if bound <= self.abandoned_below {
            return;
        }
        self.abandoned_below = bound;
        self.missing = self.missing.split_off(&bound);
    }
}

/// Which older frames may stand in for an incomplete expected frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubstituteWindow {
    /// Only frames captured after the previous sampling instant: the
    /// redundant frames of the current slot.
    Group,
    /// Any older complete frame.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub mllm_rate: f64,
    /// Extra wait, past the expected frame's due time, before the MLLM
    /// takes its frame.
    pub grace_ms: f64,
    pub window: SubstituteWindow,
}

impl SamplerConfig {
    pub fn new(mllm_rate: f64, grace_ms: f64, window: SubstituteWindow) -> Result<Self> {
        check_rate(mllm_rate)?;
        if !(grace_ms.is_finite() && grace_ms >= 0.0) {
            return Err(Error::param("grace_ms", "must be non-negative"));
        }
        Ok(Self {
            mllm_rate,
            grace_ms,
            window,
        })
    }

    pub fn sample_interval_ms(&self) -> f64 {
        1000.0 / self.mllm_rate
    }

    fn window_start(&self, sample_ts: f64) -> f64 {
        match self.window {
            SubstituteWindow::Group => sample_ts - self.sample_interval_ms() + TS_SLACK_MS,
            SubstituteWindow::Any => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleOutcome {
    /// The frame captured at the sampling instant was complete in time.
    Expected { frame_id: u64 },
    /// An older complete frame was used; `age_ms` is relative to the
    /// sampling instant.
    Substitute { frame_id: u64, age_ms: f64 },
    /// Nothing usable was complete. `wait_ms` is the time until the first
    /// eligible frame completed, `None` if none has (yet).
    Stall {
        wait_ms: Option<f64>,
        frame_id: Option<u64>,
    },
}

impl SampleOutcome {
    pub fn frame_id(&self) -> Option<u64> {
        match *self {
            SampleOutcome::Expected { frame_id } | SampleOutcome::Substitute { frame_id, .. } => {
                Some(frame_id)
            }
            SampleOutcome::Stall { frame_id, .. } => frame_id,
        }
    }

    pub fn stall_wait_ms(&self) -> f64 {
        match *self {
            SampleOutcome::Stall { wait_ms, .. } => wait_ms.unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

/// Instant at which the slot at `sample_ts` is judged: the later of the
/// sampling instant and the expected frame's due time, plus the grace.
pub fn evaluation_ts(state: &Reassembler, cfg: &SamplerConfig, sample_ts: f64) -> f64 {
    let due = expected_frame(state, sample_ts)
        .and_then(|f| f.due_ts)
        .unwrap_or(sample_ts);
    due.max(sample_ts) + cfg.grace_ms
}

fn expected_frame(state: &Reassembler, sample_ts: f64) -> Option<FrameStatus> {
    state.frames().rev().find(|f| f.capture_ts <= sample_ts + TS_SLACK_MS)
}

/// Picks the MLLM's frame for the slot at `sample_ts`, evaluated at
/// [`evaluation_ts`].
///
/// Only completions at or before the evaluation instant count towards
/// `Expected`/`Substitute`. For a stall, any completion recorded later in
/// `state` of a frame captured inside the slot window (or after it)
/// determines the wait, so the function gives the final outcome when
/// applied to a finished run.
pub fn sample_for_mllm(state: &Reassembler, cfg: &SamplerConfig, sample_ts: f64) -> SampleOutcome {
    let eval_ts = evaluation_ts(state, cfg, sample_ts);
    let window_start = cfg.window_start(sample_ts);

    let mut older = state.frames().rev().skip_while(|f| f.capture_ts > sample_ts + TS_SLACK_MS);
    if let Some(expected) = older.next() {
        if expected.complete_by(eval_ts) {
            return SampleOutcome::Expected {
                frame_id: expected.frame_id,
            };
        }
        if let Some(sub) = older
            .take_while(|f| f.capture_ts > window_start)
            .find(|f| f.complete_by(eval_ts))
        {
            return SampleOutcome::Substitute {
                frame_id: sub.frame_id,
                age_ms: sample_ts - sub.capture_ts,
            };
        }
    }

    let resolved = state
        .frames()
        .filter(|f| f.capture_ts > window_start)
        .filter_map(|f| f.completion_ts.map(|c| (c, f.frame_id)))
        .filter(|&(c, _)| c > eval_ts + TS_SLACK_MS)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    SampleOutcome::Stall {
        wait_ms: resolved.map(|(c, _)| c - eval_ts),
        frame_id: resolved.map(|(_, id)| id),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub slot: u64,
    pub sample_ts: f64,
    pub eval_ts: f64,
    pub outcome: SampleOutcome,
    /// Stall still open when the run ended; `wait_ms` runs to the end.
    pub censored: bool,
}

/// Live sampler: evaluates slots as the simulation reaches their deadline
/// and resolves stalls as frames complete.
#[derive(Debug, Clone)]
pub struct MllmSampler {
    cfg: SamplerConfig,
    records: Vec<SampleRecord>,
    open: Vec<usize>,
    horizon: f64,
}

impl MllmSampler {
    pub fn new(cfg: SamplerConfig) -> Self {
        Self {
            cfg,
            records: Vec::new(),
            open: Vec::new(),
            horizon: f64::NEG_INFINITY,
        }
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn sample_ts(&self, slot: u64) -> f64 {
        slot as f64 * self.cfg.sample_interval_ms()
    }

    /// Capture time up to which every slot has been served; frames at or
    /// before it will never be sampled.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn evaluate(&mut self, state: &Reassembler, slot: u64) -> SampleOutcome {
        let sample_ts = self.sample_ts(slot);
        let outcome = match sample_for_mllm(state, &self.cfg, sample_ts) {
            // future completions are not visible yet
            SampleOutcome::Stall { .. } => SampleOutcome::Stall {
                wait_ms: None,
                frame_id: None,
            },
            other => {
                self.horizon = self.horizon.max(sample_ts);
                other
            }
        };
        if matches!(outcome, SampleOutcome::Stall { .. }) {
            self.open.push(self.records.len());
        }
        self.records.push(SampleRecord {
            slot,
            sample_ts,
            eval_ts: evaluation_ts(state, &self.cfg, sample_ts),
            outcome,
            censored: false,
        });
        outcome
    }

    /// Resolves open stalls that `frame_id` can serve. Returns how many.
    pub fn on_frame_complete(&mut self, frame_id: u64, capture_ts: f64, now: f64) -> usize {
        let mut resolved = 0;
        let cfg = self.cfg;
        let records = &mut self.records;
        let mut horizon = self.horizon;
        self.open.retain(|&i| {
            let rec = &mut records[i];
            if capture_ts > cfg.window_start(rec.sample_ts) {
                rec.outcome = SampleOutcome::Stall {
                    wait_ms: Some(now - rec.eval_ts),
                    frame_id: Some(frame_id),
                };
                horizon = horizon.max(rec.sample_ts);
                resolved += 1;
                false
            } else {
                true
            }
        });
        self.horizon = horizon;
        resolved
    }

    /// Closes the run: open stalls are charged until `end_ts`.
    pub fn finish(mut self, end_ts: f64) -> Vec<SampleRecord> {
        for &i in &self.open {
            let rec = &mut self.records[i];
            rec.outcome = SampleOutcome::Stall {
                wait_ms: Some((end_ts - rec.eval_ts).max(0.0)),
                frame_id: None,
            };
            rec.censored = true;
        }
        self.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MTU: f64 = DEFAULT_MTU_PAYLOAD_BITS;

    fn frame(id: u64, capture_ts: f64, bytes: f64) -> Frame {
        Frame {
            frame_id: id,
            capture_ts,
            size_bits: bytes * 8.0,
            budget: None,
        }
    }

    fn pkt(seq: u64, frame_id: u64, index: u32, count: u32) -> Packet {
        Packet {
            seq,
            frame_id,
            index,
            count,
            payload_bits: MTU,
            capture_ts: frame_id as f64 * 100.0,
            send_ts: 0.0,
            is_retransmit: false,
        }
    }

    #[test]
    fn packetize_examples() {
        let p = packetize(&frame(0, 0.0, 14_000.0), 0, MTU, 0.0).unwrap();
        assert_eq!(p.len(), 10);
        assert!(p.iter().all(|p| p.payload_bits == MTU && p.count == 10));

        let p = packetize(&frame(0, 0.0, 1.0), 7, MTU, 0.0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].seq, p[0].payload_bits), (7, 8.0));

        let p = packetize(&frame(3, 0.0, 14_001.0), 100, MTU, 5.0).unwrap();
        assert_eq!(p.len(), 11);
        assert_eq!(p.last().unwrap().payload_bits, 8.0);
        assert_eq!(p.last().unwrap().seq, 110);
        assert!(p.iter().enumerate().all(|(i, p)| p.index as usize == i && p.frame_id == 3));
        let total: f64 = p.iter().map(|p| p.payload_bits).sum();
        assert_eq!(total, 14_001.0 * 8.0);

        assert!(packetize(&frame(0, 0.0, 0.0), 0, MTU, 0.0).is_err());
    }

    #[test]
    fn capture_clock_examples() {
        let mut c = CaptureClock::new(2.0, 0.0).unwrap();
        let ts: Vec<f64> = (0..3).map(|_| c.capture()).collect();
        assert_eq!(ts, vec![0.0, 500.0, 1000.0]);

        let mut c = CaptureClock::new(30.0, 0.0).unwrap();
        let ts: Vec<f64> = (0..3).map(|_| c.capture()).collect();
        assert_eq!(ts[0], 0.0);
        assert!((ts[1] - 33.333).abs() < 1e-3 && (ts[2] - 66.667).abs() < 1e-3);

        // raise 2 → 6 FPS at t = 1000
        let mut c = CaptureClock::new(2.0, 0.0).unwrap();
        c.capture();
        c.capture();
        c.request_rate(6.0).unwrap();
        assert_eq!(c.capture(), 1000.0);
        let next: Vec<f64> = (0..2).map(|_| c.capture()).collect();
        assert!((next[0] - 1166.667).abs() < 1e-3);
        assert!((next[1] - 1333.333).abs() < 1e-3);
        assert_eq!(c.rate(), 6.0);
    }

    #[test]
    fn assembly_examples() {
        let mut r = Reassembler::new();
        assert_eq!(r.on_packet_arrival(&pkt(0, 0, 0, 1), 1.0), Some(0));

        let mut r = Reassembler::new();
        assert_eq!(r.on_packet_arrival(&pkt(0, 0, 0, 2), 1.0), None);
        assert_eq!(r.on_packet_arrival(&pkt(0, 0, 0, 2), 2.0), None);
        assert_eq!(r.duplicates(), 1);
        assert_eq!(r.frame(0).unwrap().completion_ts, None);

        let mut r = Reassembler::new();
        assert_eq!(r.on_packet_arrival(&pkt(12, 4, 2, 3), 1.0), None);
        assert_eq!(r.on_packet_arrival(&pkt(10, 4, 0, 3), 2.0), None);
        assert_eq!(r.on_packet_arrival(&pkt(11, 4, 1, 3), 3.0), Some(4));
        let f = r.frame(4).unwrap();
        assert_eq!((f.first_seq, f.completion_ts), (10, Some(3.0)));
        // completion is set once
        assert_eq!(r.on_packet_arrival(&pkt(11, 4, 1, 3), 9.0), None);
        assert_eq!(r.frame(4).unwrap().completion_ts, Some(3.0));
    }

    #[test]
    fn assembly_counts_malformed_as_stale() {
        let mut r = Reassembler::new();
        r.on_packet_arrival(&pkt(0, 0, 0, 2), 1.0);
        assert_eq!(r.on_packet_arrival(&pkt(1, 0, 1, 3), 1.0), None);
        assert_eq!(r.stale(), 1);
    }

    #[test]
    fn loss_detection_examples() {
        let mut d = LossDetector::new();
        d.on_arrival(0, 0.0);
        assert_eq!(d.on_arrival(2, 1.0), 1);
        assert!(d.detect_losses(5.0, 10.0, 60.0).is_empty());
        assert_eq!(d.detect_losses(11.0, 10.0, 60.0), vec![1]);

        let mut d = LossDetector::new();
        for s in 0..5 {
            d.on_arrival(s, s as f64);
        }
        assert!(d.detect_losses(100.0, 10.0, 60.0).is_empty());

        let mut d = LossDetector::new();
        d.on_arrival(0, 0.0);
        d.on_arrival(3, 1.0);
        d.on_arrival(4, 2.0);
        assert_eq!(d.detect_losses(20.0, 10.0, 60.0), vec![1, 2]);
    }

    #[test]
    fn nack_rounds_once_per_rtt() {
        let mut d = LossDetector::new();
        d.on_arrival(1, 0.0);
        assert_eq!(d.next_due(10.0, 60.0), Some(10.0));
        assert_eq!(d.detect_losses(10.0, 10.0, 60.0), vec![0]);
        assert!(d.detect_losses(50.0, 10.0, 60.0).is_empty());
        assert_eq!(d.next_due(10.0, 60.0), Some(70.0));
        assert_eq!(d.detect_losses(70.0, 10.0, 60.0), vec![0]);
        d.on_arrival(0, 80.0);
        assert_eq!(d.next_due(10.0, 60.0), None);
    }

    #[test]
    fn abandoned_seqs_are_not_nacked() {
        let mut d = LossDetector::new();
        d.on_arrival(5, 0.0);
        d.abandon_below(3);
        assert_eq!(d.missing().collect::<Vec<_>>(), vec![3, 4]);
        d.on_arrival(8, 1.0);
        assert_eq!(d.missing().collect::<Vec<_>>(), vec![3, 4, 6, 7]);
    }

    fn cfg() -> SamplerConfig {
        SamplerConfig::new(2.0, 60.0, SubstituteWindow::Group).unwrap()
    }

    /// Frames every `interval` ms, each 2 packets; `complete[i]` is the
    /// completion time of frame i, if any.
    fn state(interval: f64, complete: &[Option<f64>]) -> Reassembler {
        let mut r = Reassembler::new();
        for (i, c) in complete.iter().enumerate() {
            let id = i as u64;
            r.announce(id, id as f64 * interval, id * 2, 2);
            if let Some(t) = c {
                let mut p = pkt(id * 2, id, 0, 2);
                p.capture_ts = id as f64 * interval;
                r.on_packet_arrival(&p, *t);
                p.seq += 1;
                p.index = 1;
                r.on_packet_arrival(&p, *t);
            }
        }
        r
    }

    #[test]
    fn sampler_examples() {
        // frames at 0, 250, 500; sample at 500 evaluated at 560
        let s = state(250.0, &[Some(40.0), Some(290.0), Some(540.0)]);
        assert_eq!(sample_for_mllm(&s, &cfg(), 500.0), SampleOutcome::Expected { frame_id: 2 });

        let s = state(250.0, &[Some(40.0), Some(290.0), Some(700.0)]);
        assert_eq!(
            sample_for_mllm(&s, &cfg(), 500.0),
            SampleOutcome::Substitute {
                frame_id: 1,
                age_ms: 250.0
            }
        );

        let s = state(500.0, &[None]);
        assert_eq!(
            sample_for_mllm(&s, &cfg(), 0.0),
            SampleOutcome::Stall {
                wait_ms: None,
                frame_id: None
            }
        );
        let empty = Reassembler::new();
        assert!(matches!(sample_for_mllm(&empty, &cfg(), 0.0), SampleOutcome::Stall { .. }));
    }

    #[test]
    fn group_window_excludes_previous_slot() {
        // 2 FPS: frame 0 served slot 0; frame 1 late → stall, not substitute
        let s = state(500.0, &[Some(40.0), Some(630.0)]);
        assert_eq!(
            sample_for_mllm(&s, &cfg(), 500.0),
            SampleOutcome::Stall {
                wait_ms: Some(70.0),
                frame_id: Some(1)
            }
        );
        let any = SamplerConfig::new(2.0, 60.0, SubstituteWindow::Any).unwrap();
        assert_eq!(
            sample_for_mllm(&s, &any, 500.0),
            SampleOutcome::Substitute {
                frame_id: 0,
                age_ms: 500.0
            }
        );
    }

    #[test]
    fn live_sampler_matches_post_hoc() {
        let mut live = MllmSampler::new(cfg());
        let mut r = Reassembler::new();
        r.announce(0, 0.0, 0, 1);
        r.announce(1, 500.0, 1, 1);
        r.on_packet_arrival(&pkt(0, 0, 0, 1), 40.0);
        assert_eq!(live.evaluate(&r, 0), SampleOutcome::Expected { frame_id: 0 });
        assert_eq!(live.horizon(), 0.0);
        assert!(matches!(live.evaluate(&r, 1), SampleOutcome::Stall { wait_ms: None, .. }));
        let mut p = pkt(1, 1, 0, 1);
        p.capture_ts = 500.0;
        r.on_packet_arrival(&p, 650.0);
        assert_eq!(live.on_frame_complete(1, 500.0, 650.0), 1);
        assert_eq!(live.horizon(), 500.0);
        let recs = live.finish(2000.0);
        assert_eq!(recs[1].outcome, sample_for_mllm(&r, &cfg(), 500.0));
        assert_eq!(recs[1].outcome.stall_wait_ms(), 90.0);
    }

    #[test]
    fn open_stall_is_censored_at_end() {
        let mut live = MllmSampler::new(cfg());
        let r = Reassembler::new();
        live.evaluate(&r, 0);
        let recs = live.finish(1000.0);
        assert!(recs[0].censored);
        assert_eq!(recs[0].outcome.stall_wait_ms(), 940.0);
    }

    #[test]
    fn first_seq_after_horizon() {
        let s = state(500.0, &[None, None, None]);
        assert_eq!(s.first_seq_after(0.0), Some(2));
        assert_eq!(s.first_seq_after(1000.0), Some(6));
        assert_eq!(Reassembler::new().first_seq_after(0.0), None);
    }
}
