//! One seeded run of a scenario: camera → packetizer → uplink → receiver →
//! MLLM sampler, with NACK and loss-report feedback on a delay-only return
//! path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocator::SemanticAllocator;
use crate::controller::RateController;
use crate::error::Result;
use crate::metrics::{aggregate, CsvRow, FrameRecord, RunReport, RunTrace};
use crate::netem::{EnqueueOutcome, EventQueue, Link, LinkStats};
use crate::scenario::{RatePolicy, Scenario, VideoSource};
use crate::trace::{TraceRecord, Tracer};
use crate::transport::{
    evaluation_ts, packetize, CaptureClock, Frame, LossDetector, MllmSampler, Packet, Reassembler,
    SampleOutcome, SampleRecord, TS_SLACK_MS,
};

#[derive(Debug)]
enum Event {
    Capture,
    Drain(Packet),
    Arrive(Packet),
    NackCheck,
    NackAtSender(Vec<u64>),
    SampleEval(u64),
    EpochTick,
    ReportAtSender { received: u64, lost: u64 },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario_id: String,
    pub seed: u64,
    pub report: RunReport,
    pub row: CsvRow,
    pub link: LinkStats,
    pub frames: Vec<FrameRecord>,
    pub samples: Vec<SampleRecord>,
    /// `(time_ms, frame_rate)` each time the capture rate was (re)set.
    pub rate_history: Vec<(f64, f64)>,
    pub events_processed: u64,
    pub trace: Vec<TraceRecord>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    q: EventQueue<Event>,
    link: Link,
    feedback_rng: ChaCha8Rng,
    tracer: Tracer,
    duration_ms: f64,

    clock: CaptureClock,
    controller: Option<RateController>,
    allocator: SemanticAllocator,
    next_seq: u64,
    sent: Vec<Packet>,
    frames: Vec<FrameRecord>,
    epoch_frame_sizes: Vec<f64>,
    retransmit_bits: f64,
    rate_history: Vec<(f64, f64)>,

    reasm: Reassembler,
    detector: LossDetector,
    sampler: MllmSampler,
    next_slot: u64,
    epoch_received: u64,
    epoch_lost: u64,
    next_nack_check: Option<f64>,
}

/// Runs `scenario` once with `seed`. Identical inputs give identical output,
/// trace included.
pub fn run(scenario: &Scenario, seed: u64, trace: bool) -> Result<RunOutput> {
    let mut link_cfg = scenario.link;
    link_cfg.seed = seed;
    let mut feedback_rng = ChaCha8Rng::seed_from_u64(seed);
    feedback_rng.set_stream(1);

    let (controller, initial_rate) = match &scenario.rate {
        RatePolicy::Adaptive(cfg) => {
            let c = RateController::new(*cfg)?;
            let r = c.decision().rate;
            (Some(c), r)
        }
        RatePolicy::Fixed(r) => (None, *r),
    };

    let mut sim = Sim {
        sc: scenario,
        q: EventQueue::new(),
        link: Link::new(link_cfg)?,
        feedback_rng,
        tracer: if trace { Tracer::enabled() } else { Tracer::disabled() },
        duration_ms: scenario.duration_s * 1000.0,
        clock: CaptureClock::new(initial_rate, 0.0)?,
        controller,
        allocator: scenario.build_allocator()?,
        next_seq: 0,
        sent: Vec::new(),
        frames: Vec::new(),
        epoch_frame_sizes: Vec::new(),
        retransmit_bits: 0.0,
        rate_history: vec![(0.0, initial_rate)],
        reasm: Reassembler::new(),
        detector: LossDetector::new(),
        sampler: MllmSampler::new(scenario.sampler),
        next_slot: 0,
        epoch_received: 0,
        epoch_lost: 0,
        next_nack_check: None,
    };
    sim.run()?;

    let t_end = sim.duration_ms + scenario.tail_s * 1000.0;
    let samples = sim.sampler.finish(t_end);
    let run_trace = RunTrace {
        duration_ms: sim.duration_ms,
        frames: sim.frames,
        samples,
        retransmit_bits: sim.retransmit_bits,
    };
    let report = aggregate(&run_trace)?;
    let row = CsvRow::new(&scenario.id, seed, scenario.loss_rate(), &report);
    Ok(RunOutput {
        scenario_id: scenario.id.clone(),
        seed,
        report,
        row,
        link: *sim.link.stats(),
        frames: run_trace.frames,
        samples: run_trace.samples,
        rate_history: sim.rate_history,
        events_processed: sim.q.processed(),
        trace: sim.tracer.into_records(),
    })
}

impl Sim<'_> {
    fn run(&mut self) -> Result<()> {
        self.q.schedule(0.0, Event::Capture);
        if let Some(c) = &self.controller {
            let epoch = c.config().epoch_ms;
            if epoch < self.duration_ms {
                self.q.schedule(epoch, Event::EpochTick);
            }
        }

        let t_end = self.duration_ms + self.sc.tail_s * 1000.0;
        while let Some((now, ev)) = self.q.pop_until(t_end) {
            match ev {
                Event::Capture => self.on_capture(now)?,
                Event::Drain(pkt) => self.on_drain(pkt, now),
                Event::Arrive(pkt) => self.on_arrive(pkt, now),
                Event::NackCheck => self.on_nack_check(now),
                Event::NackAtSender(seqs) => self.on_nack(seqs, now),
                Event::SampleEval(slot) => self.on_sample(slot, now),
                Event::EpochTick => self.on_epoch_tick(now),
                Event::ReportAtSender { received, lost } => self.on_report(received, lost, now)?,
            }
        }
        Ok(())
    }

    fn on_capture(&mut self, now: f64) -> Result<()> {
        let rate = self.clock.rate();
        let ts = self.clock.capture();
        let budget = self.allocator.budget();
        let size_bits = match self.sc.video {
            VideoSource::Allocator => budget.total_bits(),
            VideoSource::Bitrate { kbps } => kbps * 1000.0 / rate,
        };
        let frame = Frame {
            frame_id: self.frames.len() as u64,
            capture_ts: ts,
            size_bits,
            budget: Some(budget),
        };
        let packets = packetize(&frame, self.next_seq, self.sc.mtu_payload_bits, now)?;
        let count = packets.len() as u32;
        self.reasm.announce(frame.frame_id, ts, self.next_seq, count);
        self.next_seq += u64::from(count);
        self.tracer.record(now, "capture", None, Some(frame.frame_id), || {
            format!("bits={size_bits:.0} packets={count} rate={rate}")
        });
        let mut due = now + self.sc.link.one_way_delay_ms;
        for pkt in packets {
            if let Some(drain_ts) = self.transmit(pkt.clone(), now) {
                due = due.max(drain_ts + self.sc.link.one_way_delay_ms);
            }
            self.sent.push(pkt);
        }
        self.reasm.set_due(frame.frame_id, due);
        self.frames.push(FrameRecord {
            frame_id: frame.frame_id,
            capture_ts: ts,
            size_bits,
            completion_ts: None,
            bits_sent: size_bits,
        });
        self.epoch_frame_sizes.push(size_bits);

        let next = self.clock.next_capture_ts();
        if next < self.duration_ms {
            self.q.schedule(next, Event::Capture);
        }

        // this frame is the expected one for every slot before the next capture
        let next = if next < self.duration_ms { next } else { f64::INFINITY };
        loop {
            let sample_ts = self.sampler.sample_ts(self.next_slot);
            if sample_ts >= self.duration_ms || sample_ts + TS_SLACK_MS >= next {
                break;
            }
            let eval = evaluation_ts(&self.reasm, self.sampler.config(), sample_ts);
            self.q.schedule_late(eval, Event::SampleEval(self.next_slot));
            self.next_slot += 1;
        }
        Ok(())
    }

    fn transmit(&mut self, pkt: Packet, now: f64) -> Option<f64> {
        match self.link.enqueue(pkt.payload_bits, now) {
            EnqueueOutcome::Accepted { drain_ts } => {
                self.tracer.record(now, "enqueue", Some(pkt.seq), Some(pkt.frame_id), || {
                    format!("drain_ts={drain_ts:.6} retransmit={}", pkt.is_retransmit)
                });
                self.q.schedule(drain_ts, Event::Drain(pkt));
                Some(drain_ts)
            }
            EnqueueOutcome::DroppedOverflow => {
                self.tracer
                    .record(now, "overflow", Some(pkt.seq), Some(pkt.frame_id), String::new);
                None
            }
        }
    }

    fn on_drain(&mut self, pkt: Packet, now: f64) {
        match self.link.deliver(pkt.payload_bits, now) {
            Some(at) => self.q.schedule(at, Event::Arrive(pkt)),
            None => self
                .tracer
                .record(now, "loss", Some(pkt.seq), Some(pkt.frame_id), String::new),
        }
    }

    fn on_arrive(&mut self, pkt: Packet, now: f64) {
        self.tracer.record(now, "arrive", Some(pkt.seq), Some(pkt.frame_id), || {
            if pkt.is_retransmit { "retransmit" } else { "" }.to_string()
        });
        if !pkt.is_retransmit {
            self.epoch_received += 1;
        }
        self.epoch_lost += self.detector.on_arrival(pkt.seq, now) as u64;

        if let Some(id) = self.reasm.on_packet_arrival(&pkt, now) {
            let frame = &mut self.frames[id as usize];
            frame.completion_ts = Some(now);
            self.tracer
                .record(now, "complete", None, Some(id), || format!("latency={:.6}", now - frame.capture_ts));
            if self.sampler.on_frame_complete(id, pkt.capture_ts, now) > 0 {
                self.abandon_skipped();
            }
        }
        self.schedule_nack_check(now);
    }

    fn schedule_nack_check(&mut self, now: f64) {
        let Some(due) = self.detector.next_due(self.sc.nack_delay_ms, self.sc.rtt_ms()) else {
            return;
        };
        let due = due.max(now);
        if self.next_nack_check.is_none_or(|t| due < t) {
            self.next_nack_check = Some(due);
            self.q.schedule(due, Event::NackCheck);
        }
    }

    fn on_nack_check(&mut self, now: f64) {
        if self.next_nack_check == Some(now) {
            self.next_nack_check = None;
        }
        let seqs = self
            .detector
            .detect_losses(now, self.sc.nack_delay_ms, self.sc.rtt_ms());
        if !seqs.is_empty() {
            let dropped = self.feedback_lost();
            self.tracer.record(now, "nack", None, None, || {
                format!("seqs={seqs:?}{}", if dropped { " dropped" } else { "" })
            });
            if !dropped {
                self.q
                    .schedule(now + self.sc.feedback_delay_ms, Event::NackAtSender(seqs));
            }
        }
        self.schedule_nack_check(now);
    }

    fn on_nack(&mut self, seqs: Vec<u64>, now: f64) {
        for seq in seqs {
            let mut pkt = self.sent[seq as usize].clone();
            pkt.is_retransmit = true;
            pkt.send_ts = now;
            self.retransmit_bits += pkt.payload_bits;
            self.frames[pkt.frame_id as usize].bits_sent += pkt.payload_bits;
            self.transmit(pkt, now);
        }
    }

    fn on_sample(&mut self, slot: u64, now: f64) {
        let outcome = self.sampler.evaluate(&self.reasm, slot);
        self.tracer.record(now, "sample", None, outcome.frame_id(), || match outcome {
            SampleOutcome::Expected { .. } => format!("slot={slot} expected"),
            SampleOutcome::Substitute { age_ms, .. } => format!("slot={slot} substitute age={age_ms:.6}"),
            SampleOutcome::Stall { .. } => format!("slot={slot} stall"),
        });
        if !matches!(outcome, SampleOutcome::Stall { .. }) {
            self.abandon_skipped();
        }
    }

    /// Stops NACKing packets of frames the sampler has moved past.
    fn abandon_skipped(&mut self) {
        if !self.sc.suppress_skipped_retransmissions {
            return;
        }
        if let Some(bound) = self.reasm.first_seq_after(self.sampler.horizon()) {
            self.detector.abandon_below(bound);
        }
    }

    fn on_epoch_tick(&mut self, now: f64) {
        let (received, lost) = (self.epoch_received, self.epoch_lost);
        self.epoch_received = 0;
        self.epoch_lost = 0;
        let dropped = self.feedback_lost();
        self.tracer.record(now, "report", None, None, || {
            format!("received={received} lost={lost}{}", if dropped { " dropped" } else { "" })
        });
        if !dropped {
            self.q.schedule(
                now + self.sc.feedback_delay_ms,
                Event::ReportAtSender { received, lost },
            );
        }
        if let Some(c) = &self.controller {
            let next = now + c.config().epoch_ms;
            if next < self.duration_ms {
                self.q.schedule(next, Event::EpochTick);
            }
        }
    }

    fn on_report(&mut self, received: u64, lost: u64, now: f64) -> Result<()> {
        let Some(controller) = self.controller.as_mut() else {
            return Ok(());
        };
        let sizes = std::mem::take(&mut self.epoch_frame_sizes);
        let decision = controller.on_epoch(received, lost, &sizes, self.sc.mtu_payload_bits)?;
        let (p, kappa) = (controller.loss().p, controller.kappa());
        self.tracer.record(now, "rate", None, None, || {
            format!(
                "p={p:.6} kappa={kappa:.3} rate={} violation={}",
                decision.rate, decision.residual_violation
            )
        });
        if decision.rate != self.clock.rate() {
            self.clock.request_rate(decision.rate)?;
            self.rate_history.push((now, decision.rate));
        }
        Ok(())
    }

    fn feedback_lost(&mut self) -> bool {
        self.sc.feedback_loss > 0.0 && self.feedback_rng.random::<f64>() < self.sc.feedback_loss
    }
}
