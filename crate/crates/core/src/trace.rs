//! Observable events: what the gateway streams and what trace files hold.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::protocol::EpochTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    HolonCreated,
    HolonRemoved,
    SlotCommitted,
    OpStarted,
    OpProgress,
    OpDone,
    OrderProgress,
    Overrun,
}

/// An event before it is stamped with a sequence number and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub payload: BTreeMap<String, Json>,
}

impl TraceEvent {
    pub fn new(kind: EventKind) -> Self {
        Self {
            kind,
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Json>) -> Self {
        self.payload.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFrame {
    pub seq: u64,
    pub sim_time: EpochTime,
    pub kind: EventKind,
    pub payload: BTreeMap<String, Json>,
}

impl EventFrame {
    pub fn text(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Json::as_str)
    }

    pub fn int(&self, key: &str) -> Option<u64> {
        self.payload.get(key).and_then(Json::as_u64)
    }
}

/// Writes frames as JSON lines.
pub fn write_jsonl<W: Write>(mut out: W, frames: &[EventFrame]) -> io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl(text: &str) -> Result<Vec<EventFrame>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
