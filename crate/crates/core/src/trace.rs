//! Newline-delimited event traces.
//!
//! Each line is a JSON object with the fields `time_ms`, `event`, `seq`,
//! `frame_id`, `detail`, always in that order. `seq` and `frame_id` are
//! `null` when they do not apply.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub time_ms: f64,
    pub event: &'static str,
    pub seq: Option<u64>,
    pub frame_id: Option<u64>,
    pub detail: String,
}

/// Optional in-memory trace sink. Disabled sinks drop records unformatted.
#[derive(Debug, Clone, Default)]
pub struct Tracer {
    records: Option<Vec<TraceRecord>>,
}

impl Tracer {
    pub fn enabled() -> Self {
        Self {
            records: Some(Vec::new()),
        }
    }

    pub fn disabled() -> Self {
        Self { records: None }
    }

    pub fn is_enabled(&self) -> bool {
        self.records.is_some()
    }

    pub fn record(
        &mut self,
        time_ms: f64,
        event: &'static str,
        seq: Option<u64>,
        frame_id: Option<u64>,
        detail: impl FnOnce() -> String,
    ) {
        if let Some(records) = self.records.as_mut() {
            records.push(TraceRecord {
                time_ms,
                event,
                seq,
                frame_id,
                detail: detail(),
            });
        }
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records.unwrap_or_default()
    }
}

pub fn write_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_order_is_fixed() {
        let rec = TraceRecord {
            time_ms: 1.5,
            event: "arrive",
            seq: Some(3),
            frame_id: None,
            detail: "x".into(),
        };
        let mut buf = Vec::new();
        write_jsonl(&[rec], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"time_ms\":1.5,\"event\":\"arrive\",\"seq\":3,\"frame_id\":null,\"detail\":\"x\"}\n"
        );
    }

    #[test]
    fn disabled_tracer_keeps_nothing() {
        let mut t = Tracer::disabled();
        t.record(0.0, "e", None, None, || unreachable!());
        assert!(t.into_records().is_empty());
    }
}
