//! Per-case JSONL traces: one header line, then one event per line.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategy::StrategyEvent;

pub const TRACE_SCHEMA: &str = "dtv-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    pub case_id: String,
    pub strategy: String,
    pub budget: usize,
    pub per_round_cap: usize,
}

impl TraceHeader {
    pub fn new(case_id: &str, strategy: &str, budget: usize, per_round_cap: usize) -> Self {
        TraceHeader {
            schema: TRACE_SCHEMA.to_string(),
            version: TRACE_VERSION,
            case_id: case_id.to_string(),
            strategy: strategy.to_string(),
            budget,
            per_round_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: usize,
    /// Milliseconds since the Unix epoch when the line was written.
    pub timestamp_ms: u64,
    pub case_id: String,
    #[serde(flatten)]
    pub event: StrategyEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("empty trace")]
    Empty,
    #[error("line {line}: bad header: {message}")]
    Header { line: usize, message: String },
    #[error("unsupported trace schema {schema} v{version}")]
    Schema { schema: String, version: u32 },
    #[error("line {line}: bad event: {message}")]
    Event { line: usize, message: String },
    #[error("line {line}: truncated event")]
    Truncated { line: usize },
    #[error("line {line}: expected seq {expected}, found {found}")]
    Sequence { line: usize, expected: usize, found: usize },
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Writes a full trace, replacing any previous file.
pub fn write_trace(path: &Path, header: &TraceHeader, events: &[StrategyEvent]) -> io::Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        serde_json::to_writer(&mut w, header)?;
        w.write_all(b"\n")?;
        for (seq, event) in events.iter().enumerate() {
            let line = TraceEvent {
                seq,
                timestamp_ms: now_ms(),
                case_id: header.case_id.clone(),
                event: event.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)
}

pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut lines = text.split_inclusive('\n').enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(TraceError::Empty)?;
    let header: TraceHeader = serde_json::from_str(first.trim_end()).map_err(|e| TraceError::Header {
        line: 1,
        message: e.to_string(),
    })?;
    if header.schema != TRACE_SCHEMA || header.version != TRACE_VERSION {
        return Err(TraceError::Schema {
            schema: header.schema,
            version: header.version,
        });
    }
    let mut events = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let ev: TraceEvent = match serde_json::from_str(raw.trim_end()) {
            Ok(ev) => ev,
            Err(e) if !raw.ends_with('\n') && e.is_eof() => return Err(TraceError::Truncated { line }),
            Err(e) => {
                return Err(TraceError::Event {
                    line,
                    message: e.to_string(),
                })
            }
        };
        if ev.seq != events.len() {
            return Err(TraceError::Sequence {
                line,
                expected: events.len(),
                found: ev.seq,
            });
        }
        events.push(ev);
    }
    Ok(Trace { header, events })
}

pub fn read_trace(path: &Path) -> Result<Trace, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace(&text)
}
