//! Line-delimited trace records and their integrity trailer.
//!
//! Each line is a canonical JSON object `{chain, kind, payload, tick}`.
//! The first line is a `header` carrying the effective scenario; the last
//! is a `trailer` with the record count and a chained digest of every line
//! before it.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical;
use crate::contracts::GateMode;
use crate::simnet::scenario::ScenarioConfig;
use crate::types::{Digest, HASH_ALGORITHM};

pub const TRACE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub kind: String,
    pub chain: Option<String>,
    pub payload: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub lines: Vec<String>,
}

impl Trace {
    pub fn push(&mut self, tick: u64, kind: &str, chain: Option<&str>, payload: Value) {
        let record = json!({ "tick": tick, "kind": kind, "chain": chain, "payload": payload });
        self.lines.push(canonical::value_to_canonical(&record));
    }

    pub fn header(&mut self, scenario: &ScenarioConfig) {
        let payload = json!({
            "scenario": serde_json::to_value(scenario).expect("scenario serializes"),
            "version": TRACE_VERSION,
            "hash_algorithm": HASH_ALGORITHM,
            "seed": scenario.seed,
            "mode": scenario.mode,
        });
        self.push(0, "header", None, payload);
    }

    /// Append the trailer. Call once, last.
    pub fn seal(&mut self, tick: u64) {
        let digest = chain_digest(&self.lines);
        let records = self.lines.len();
        self.push(tick, "trailer", None, json!({ "records": records, "digest": digest }));
    }

    pub fn text(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }

    pub fn count(&self, kind: &str) -> usize {
        let needle = format!("\"kind\":\"{kind}\"");
        self.lines.iter().filter(|l| l.contains(&needle)).count()
    }

    pub fn records(&self) -> impl Iterator<Item = TraceRecord> + '_ {
        self.lines.iter().filter_map(|l| serde_json::from_str(l).ok())
    }
}

/// `d_0 = 0`, `d_i = H(d_{i-1} || line_i)`.
pub fn chain_digest(lines: &[String]) -> Digest {
    lines.iter().fold(Digest::ZERO, |acc, line| {
        let mut bytes = acc.as_bytes().to_vec();
        bytes.extend_from_slice(line.as_bytes());
        Digest::of(&bytes)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace was written by version {found}, this is {TRACE_VERSION}")]
    Version { found: String },
    #[error("trailer digest does not match the records")]
    Trailer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub scenario: ScenarioConfig,
    pub mode: GateMode,
    pub seed: u64,
}

/// Read the header line of a trace.
pub fn parse_header(text: &str) -> Result<Header, TraceError> {
    let first = text.lines().next().ok_or(TraceError::Empty)?;
    let malformed = |message: String| TraceError::Malformed { line: 1, message };
    let record: TraceRecord = serde_json::from_str(first).map_err(|e| malformed(e.to_string()))?;
    if record.kind != "header" {
        return Err(malformed("first record is not a header".into()));
    }
    let version = record.payload.get("version").and_then(Value::as_str).unwrap_or_default();
    if version != TRACE_VERSION {
        return Err(TraceError::Version { found: version.to_string() });
    }
    let scenario: ScenarioConfig = record
        .payload
        .get("scenario")
        .cloned()
        .map(serde_json::from_value)
        .ok_or_else(|| malformed("header carries no scenario".into()))?
        .map_err(|e| malformed(e.to_string()))?;
    Ok(Header { mode: scenario.mode, seed: scenario.seed, scenario })
}

/// Check the trailer against the lines before it.
pub fn verify_trailer(text: &str) -> Result<(), TraceError> {
    let lines: Vec<String> = text.lines().map(str::to_string).collect();
    let (last, body) = lines.split_last().ok_or(TraceError::Empty)?;
    let record: TraceRecord =
        serde_json::from_str(last).map_err(|e| TraceError::Malformed { line: lines.len(), message: e.to_string() })?;
    let expected = serde_json::to_value(chain_digest(body)).expect("digest serializes");
    if record.kind != "trailer" || record.payload.get("digest") != Some(&expected) {
        return Err(TraceError::Trailer);
    }
    Ok(())
}

/// The first line where two traces differ, 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub line: usize,
    pub expected: Option<String>,
    pub found: Option<String>,
}

pub fn first_divergence<'a>(
    expected: impl IntoIterator<Item = &'a str>,
    found: impl IntoIterator<Item = &'a str>,
) -> Option<Divergence> {
    let mut e = expected.into_iter();
    let mut f = found.into_iter();
    let mut line = 0;
    loop {
        line += 1;
        match (e.next(), f.next()) {
            (None, None) => return None,
            (a, b) if a == b => continue,
            (a, b) => return Some(Divergence { line, expected: a.map(str::to_string), found: b.map(str::to_string) }),
        }
    }
}
