use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pool::PairRecord;
use crate::sampler::SamplerConfig;

/// Where an accepted label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Submitted by the labeller for the pending query.
    Labeller,
    /// The sampler drew an already-labelled pair; the cached label was reused.
    Ledger,
}

/// One line of the append-only session log. `at` is milliseconds since the
/// Unix epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        at: u64,
        pairs: Vec<PairRecord>,
        scores_are_probabilities: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        records: Option<HashMap<String, Value>>,
        config: SamplerConfig,
    },
    QueryDrawn {
        session_id: String,
        at: u64,
        t: usize,
        pair_id: String,
        stratum: usize,
        weight: f64,
    },
    LabelAccepted {
        session_id: String,
        at: u64,
        t: usize,
        pair_id: String,
        #[serde(with = "crate::pool::binary")]
        label: bool,
        source: LabelSource,
    },
}

impl Event {
    pub fn session_id(&self) -> &str {
        match self {
            Event::Created { session_id, .. }
            | Event::QueryDrawn { session_id, .. }
            | Event::LabelAccepted { session_id, .. } => session_id,
        }
    }

    /// The parts of an event that replay must reproduce. Timestamps and
    /// weights (which lose bits in decimal) are left out.
    pub(crate) fn replay_key(&self) -> Option<(usize, &str, Option<bool>)> {
        match self {
            Event::Created { .. } => None,
            Event::QueryDrawn { t, pair_id, .. } => Some((*t, pair_id, None)),
            Event::LabelAccepted { t, pair_id, label, .. } => Some((*t, pair_id, Some(*label))),
        }
    }
}

/// Newline-delimited JSON writer, flushed after every event.
#[derive(Debug)]
pub struct EventLog {
    writer: BufWriter<File>,
}

impl EventLog {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog { writer: BufWriter::new(file) })
    }

    pub fn append(&mut self, event: &Event) -> Result<()> {
        serde_json::to_writer(&mut self.writer, event)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads every event in `path`. A missing file is an empty log.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event =
            serde_json::from_str(&line).map_err(|e| Error::EventLog(format!("line {}: {e}", i + 1)))?;
        events.push(event);
    }
    Ok(events)
}
