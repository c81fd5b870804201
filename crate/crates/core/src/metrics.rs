//! Run evaluation: frame latency, stall latency at the MLLM sampler, and
//! bits wasted on frames the MLLM never looks at.

use std::collections::HashSet;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::transport::{SampleOutcome, SampleRecord};

/// Time from capture until the last packet of the frame arrived.
pub fn frame_latency(capture_ts: f64, completion_ts: f64) -> Result<f64> {
    if completion_ts < capture_ts {
        return Err(Error::param(
            "completion_ts",
            format!("{completion_ts} precedes capture at {capture_ts}"),
        ));
    }
    Ok(completion_ts - capture_ts)
}

/// Nearest-rank percentile of an ascending slice; `pct` in 1..=100.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> Option<f64> {
    if sorted.is_empty() || pct == 0 || pct > 100 {
        return None;
    }
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).max(1);
    Some(sorted[rank - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub capture_ts: f64,
    pub size_bits: f64,
    pub completion_ts: Option<f64>,
    /// Bits put on the wire for this frame, retransmissions included.
    pub bits_sent: f64,
}

/// Everything a finished run hands to [`aggregate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub duration_ms: f64,
    pub frames: Vec<FrameRecord>,
    pub samples: Vec<SampleRecord>,
    pub retransmit_bits: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameLatencyStats {
    /// Sorted ascending.
    pub samples: Vec<f64>,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub mean: f64,
    pub incomplete_count: u64,
}

impl FrameLatencyStats {
    pub fn from_frames(frames: &[FrameRecord]) -> Result<Self> {
        let mut samples = Vec::with_capacity(frames.len());
        let mut incomplete_count = 0;
        for f in frames {
            match f.completion_ts {
                Some(done) => samples.push(frame_latency(f.capture_ts, done)?),
                None => incomplete_count += 1,
            }
        }
        samples.sort_by(f64::total_cmp);
        let pick = |pct| nearest_rank(&samples, pct).unwrap_or(0.0);
        let mean = if samples.is_empty() {
            0.0
        } else {
            samples.iter().sum::<f64>() / samples.len() as f64
        };
        Ok(Self {
            p50: pick(50),
            p90: pick(90),
            p99: pick(99),
            mean,
            incomplete_count,
            samples,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StallReport {
    /// One entry per sampling slot, zero unless the slot stalled.
    pub waits_ms: Vec<f64>,
    pub mean_ms: f64,
    pub stall_count: u64,
    pub censored_count: u64,
}

impl StallReport {
    pub fn from_samples(samples: &[SampleRecord]) -> Self {
        let waits_ms: Vec<f64> = samples.iter().map(|s| s.outcome.stall_wait_ms()).collect();
        let stall_count = samples
            .iter()
            .filter(|s| matches!(s.outcome, SampleOutcome::Stall { .. }))
            .count() as u64;
        let mean_ms = if waits_ms.is_empty() {
            0.0
        } else {
            waits_ms.iter().sum::<f64>() / waits_ms.len() as f64
        };
        Self {
            mean_ms,
            stall_count,
            censored_count: samples.iter().filter(|s| s.censored).count() as u64,
            waits_ms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WasteReport {
    pub total_bits: f64,
    pub unsampled_bits: f64,
    pub waste_fraction: f64,
}

impl WasteReport {
    pub fn from_run(frames: &[FrameRecord], samples: &[SampleRecord]) -> Self {
        let used: HashSet<u64> = samples.iter().filter_map(|s| s.outcome.frame_id()).collect();
        let total_bits: f64 = frames.iter().map(|f| f.bits_sent).sum();
        let unsampled_bits: f64 = frames
            .iter()
            .filter(|f| !used.contains(&f.frame_id))
            .map(|f| f.bits_sent)
            .sum();
        let waste_fraction = if total_bits > 0.0 {
            unsampled_bits / total_bits
        } else {
            0.0
        };
        Self {
            total_bits,
            unsampled_bits,
            waste_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutcomeHistogram {
    pub expected: u64,
    pub substitute: u64,
    pub stall: u64,
}

impl OutcomeHistogram {
    pub fn from_samples(samples: &[SampleRecord]) -> Self {
        let mut h = Self::default();
        for s in samples {
            match s.outcome {
                SampleOutcome::Expected { .. } => h.expected += 1,
                SampleOutcome::Substitute { .. } => h.substitute += 1,
                SampleOutcome::Stall { .. } => h.stall += 1,
            }
        }
        h
    }

    pub fn total(&self) -> u64 {
        self.expected + self.substitute + self.stall
    }

    fn fraction(&self, n: u64) -> f64 {
        match self.total() {
            0 => 0.0,
            t => n as f64 / t as f64,
        }
    }

    pub fn expected_fraction(&self) -> f64 {
        self.fraction(self.expected)
    }

    pub fn substitute_fraction(&self) -> f64 {
        self.fraction(self.substitute)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub latency: FrameLatencyStats,
    pub stall: StallReport,
    pub waste: WasteReport,
    pub outcomes: OutcomeHistogram,
    pub frames_sent: u64,
    pub media_bits: f64,
    pub retransmit_bits: f64,
    pub duration_ms: f64,
    /// No frames and no samples: every figure above is zero.
    pub empty: bool,
}

impl RunReport {
    pub fn media_bitrate_kbps(&self) -> f64 {
        if self.duration_ms > 0.0 {
            self.media_bits / self.duration_ms
        } else {
            0.0
        }
    }

    pub fn frame_rate(&self) -> f64 {
        if self.duration_ms > 0.0 {
            self.frames_sent as f64 * 1000.0 / self.duration_ms
        } else {
            0.0
        }
    }

    pub fn total_bits_sent(&self) -> f64 {
        self.media_bits + self.retransmit_bits
    }
}

pub fn aggregate(trace: &RunTrace) -> Result<RunReport> {
    if trace.frames.is_empty() && trace.samples.is_empty() {
        return Ok(RunReport {
            duration_ms: trace.duration_ms,
            empty: true,
            ..RunReport::default()
        });
    }
    Ok(RunReport {
        latency: FrameLatencyStats::from_frames(&trace.frames)?,
        stall: StallReport::from_samples(&trace.samples),
        waste: WasteReport::from_run(&trace.frames, &trace.samples),
        outcomes: OutcomeHistogram::from_samples(&trace.samples),
        frames_sent: trace.frames.len() as u64,
        media_bits: trace.frames.iter().map(|f| f.size_bits).sum(),
        retransmit_bits: trace.retransmit_bits,
        duration_ms: trace.duration_ms,
        empty: false,
    })
}

/// One CSV row per (scenario, seed). Column order is part of the format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub scenario_id: String,
    pub seed: u64,
    pub bitrate_kbps: f64,
    pub loss_rate: f64,
    pub frame_rate: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
    pub stall_mean_ms: f64,
    pub stall_count: u64,
    pub waste_fraction: f64,
    pub substitute_fraction: f64,
    pub expected_fraction: f64,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "scenario_id",
    "seed",
    "bitrate_kbps",
    "loss_rate",
    "frame_rate",
    "p50_ms",
    "p90_ms",
    "p99_ms",
    "mean_ms",
    "stall_mean_ms",
    "stall_count",
    "waste_fraction",
    "substitute_fraction",
    "expected_fraction",
];

impl CsvRow {
    /// Real-valued columns are rounded to 1e-6 so that float noise from
    /// timestamp arithmetic does not show up in the output.
    pub fn new(scenario_id: &str, seed: u64, loss_rate: f64, report: &RunReport) -> Self {
        Self {
            scenario_id: scenario_id.to_string(),
            seed,
            bitrate_kbps: round6(report.media_bitrate_kbps()),
            loss_rate: round6(loss_rate),
            frame_rate: round6(report.frame_rate()),
            p50_ms: round6(report.latency.p50),
            p90_ms: round6(report.latency.p90),
            p99_ms: round6(report.latency.p99),
            mean_ms: round6(report.latency.mean),
            stall_mean_ms: round6(report.stall.mean_ms),
            stall_count: report.stall.stall_count,
            waste_fraction: round6(report.waste.waste_fraction),
            substitute_fraction: round6(report.outcomes.substitute_fraction()),
            expected_fraction: round6(report.outcomes.expected_fraction()),
        }
    }
}

fn round6(x: f64) -> f64 {
    if x.is_finite() {
        (x * 1e6).round() / 1e6
    } else {
        x
    }
}

pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
