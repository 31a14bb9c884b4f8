//! Event log lines: `{"seq": n, "at": rfc3339, "kind": .., "payload": {..}}`.
//!
//! `seq` starts at 1 and increases by one per line.

use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CurationError, CurationEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub event: CurationEvent,
}

#[derive(Serialize)]
struct LineOut<'a> {
    seq: u64,
    at: &'a DateTime<Utc>,
    kind: &'a str,
    payload: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineIn {
    seq: u64,
    at: DateTime<Utc>,
    kind: String,
    payload: Value,
}

impl LoggedEvent {
    pub fn to_json_line(&self) -> String {
        let tagged = serde_json::to_value(&self.event).expect("events serialize");
        let (kind, payload) = match tagged {
            Value::Object(mut map) => (
                map.remove("kind")
                    .and_then(|k| k.as_str().map(str::to_owned)),
                map.remove("payload").unwrap_or(Value::Null),
            ),
            _ => unreachable!("adjacently tagged enum serializes to an object"),
        };
        let kind = kind.expect("tag present");
        serde_json::to_string(&LineOut {
            seq: self.seq,
            at: &self.at,
            kind: &kind,
            payload,
        })
        .expect("log line serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, CurationError> {
        let raw: LineIn =
            serde_json::from_str(line).map_err(|e| CurationError::MalformedLog(e.to_string()))?;
        let mut tagged = serde_json::Map::new();
        tagged.insert("kind".into(), Value::String(raw.kind));
        tagged.insert("payload".into(), raw.payload);
        let event = serde_json::from_value(Value::Object(tagged))
            .map_err(|e| CurationError::MalformedLog(e.to_string()))?;
        Ok(Self {
            seq: raw.seq,
            at: raw.at,
            event,
        })
    }
}

/// Reads a whole log, checking that `seq` runs 1, 2, 3, ...
pub fn read_event_log<R: BufRead>(reader: R) -> Result<Vec<LoggedEvent>, CurationError> {
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| CurationError::MalformedLog(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = LoggedEvent::from_json_line(&line)?;
        let expected = events.len() as u64 + 1;
        if event.seq != expected {
            return Err(CurationError::BadSequence {
                expected,
                got: event.seq,
            });
        }
        events.push(event);
    }
    Ok(events)
}

pub fn write_event_log<W: Write>(mut out: W, events: &[LoggedEvent]) -> std::io::Result<()> {
    for event in events {
        out.write_all(event.to_json_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
