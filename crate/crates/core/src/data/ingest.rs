//! Raw event files to validated sequences.
//!
//! Two formats are read:
//! - `jsonl`: one sequence per line, `{"events": [[mark, time], ...], "t0": .., "t_end": ..}`
//!   with `t0`/`t_end` optional (defaulting to the first and last event time).
//!   Lines starting with `#` are comments.
//! - `csv`: header `seq_id,mark,time`, one event per row, rows of a sequence in time order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EhdError, Result};
use crate::event::{Event, EventSequence};

/// Equal timestamps within a sequence are separated by this times the event index.
pub const TIE_JITTER: f64 = 1e-9;

/// More than this fraction of bad records fails the whole ingestion.
pub const MAX_BAD_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = EhdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(EhdError::Config(format!("unknown data format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub marks: usize,
    #[serde(default)]
    pub mark_names: Vec<String>,
    pub sequences: usize,
    pub events: usize,
    /// Mean inter-event interval over all sequences.
    pub interval_scale: f64,
    /// How each sequence's window is set.
    pub window_convention: String,
    pub jittered_sequences: usize,
    pub bad_records: usize,
    pub total_records: usize,
    /// `(file name, sha256)` of every input file.
    pub sources: Vec<(String, String)>,
    #[serde(default)]
    pub windows: Option<WindowStats>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub len_future: usize,
    pub len_history: usize,
    pub instances: usize,
    pub skipped_sequences: usize,
    pub train: usize,
    pub eval: usize,
    pub test: usize,
    pub test_sampled: usize,
}

/// One rejected record, reported but not fatal on its own.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub record: usize,
    pub message: String,
}

pub struct Ingested {
    pub sequences: Vec<EventSequence>,
    pub manifest: DatasetManifest,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Deserialize)]
struct JsonRecord {
    events: Vec<(usize, f64)>,
    t0: Option<f64>,
    t_end: Option<f64>,
}

pub fn ingest(path: &Path, format: Format, name: &str, marks: usize) -> Result<Ingested> {
    let bytes = fs::read(path).map_err(|e| EhdError::io(path.display().to_string(), e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| EhdError::InvalidData(format!("{} is not UTF-8", path.display())))?;
    let source = (
        path.file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        hex::encode(Sha256::digest(&bytes)),
    );
    let mut ingested = ingest_str(&text, format, name, marks)?;
    ingested.manifest.sources.push(source);
    Ok(ingested)
}

/// Parses file contents; see the module docs for the formats.
pub fn ingest_str(text: &str, format: Format, name: &str, marks: usize) -> Result<Ingested> {
    if text.trim().is_empty() {
        return Err(EhdError::InvalidData("empty input".into()));
    }
    let mut diagnostics = Vec::new();
    let (raw, total) = match format {
        Format::Jsonl => parse_jsonl(text, &mut diagnostics),
        Format::Csv => parse_csv(text, marks, &mut diagnostics)?,
    };
    let mut sequences = Vec::new();
    let mut jittered = 0;
    for (record, mut seq, weight) in raw {
        match repair(&mut seq, marks) {
            Ok(j) => {
                jittered += usize::from(j);
                sequences.push(seq);
            }
            Err(e) => diagnostics.push(Diagnostic {
                record,
                message: format!("{e} ({weight} records dropped)"),
            }),
        }
    }
    let bad = total - sequences.iter().map(|s| record_weight(format, s)).sum::<usize>();
    for d in &diagnostics {
        log::warn!("record {}: {}", d.record, d.message);
    }
    if bad as f64 > MAX_BAD_FRACTION * total as f64 {
        return Err(EhdError::InvalidData(format!(
            "{bad} of {total} records are bad (more than {:.0}%)",
            100.0 * MAX_BAD_FRACTION
        )));
    }
    if sequences.is_empty() {
        return Err(EhdError::InvalidData("no valid sequences".into()));
    }
    let events: usize = sequences.iter().map(EventSequence::len).sum();
    let manifest = DatasetManifest {
        name: name.to_string(),
        marks,
        sequences: sequences.len(),
        events,
        interval_scale: mean_interval(&sequences),
        window_convention: "t0 and t_end from the record, else first and last event".into(),
        jittered_sequences: jittered,
        bad_records: bad,
        total_records: total,
        ..Default::default()
    };
    Ok(Ingested {
        sequences,
        manifest,
        diagnostics,
    })
}

fn record_weight(format: Format, s: &EventSequence) -> usize {
    match format {
        Format::Jsonl => 1,
        Format::Csv => s.len(),
    }
}

type Raw = Vec<(usize, EventSequence, usize)>;

fn parse_jsonl(text: &str, diagnostics: &mut Vec<Diagnostic>) -> (Raw, usize) {
    let mut out = Vec::new();
    let mut total = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        total += 1;
        match serde_json::from_str::<JsonRecord>(line) {
            Ok(r) => {
                let events: Vec<Event> = r.events.iter().map(|&(m, t)| Event::new(m, t)).collect();
                let t0 = r.t0.or(events.first().map(|e| e.time)).unwrap_or(0.0);
                let t_end = r.t_end.or(events.last().map(|e| e.time)).unwrap_or(t0);
                out.push((i + 1, EventSequence::new(events, t0, t_end), 1));
            }
            Err(e) => diagnostics.push(Diagnostic {
                record: i + 1,
                message: format!("unparseable line: {e}"),
            }),
        }
    }
    (out, total)
}

fn parse_csv(text: &str, marks: usize, diagnostics: &mut Vec<Diagnostic>) -> Result<(Raw, usize)> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, h)| h.trim().to_string()).unwrap_or_default();
    if header != "seq_id,mark,time" {
        return Err(EhdError::InvalidData(format!(
            "csv header must be seq_id,mark,time, found {header:?}"
        )));
    }
    let mut groups: BTreeMap<u64, (usize, Vec<Event>)> = BTreeMap::new();
    let mut total = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [id, m, t] => match (id.parse::<u64>(), m.parse::<usize>(), t.parse::<f64>()) {
                (Ok(id), Ok(m), Ok(t)) if m < marks && t.is_finite() => Ok((id, Event::new(m, t))),
                (Ok(_), Ok(m), Ok(_)) if m >= marks => Err(format!("mark {m} outside 0..{marks}")),
                _ => Err(format!("unparseable row {line:?}")),
            },
            _ => Err(format!("expected 3 fields, found {}", fields.len())),
        };
        match parsed {
            Ok((id, e)) => groups.entry(id).or_insert_with(|| (i + 1, Vec::new())).1.push(e),
            Err(message) => diagnostics.push(Diagnostic { record: i + 1, message }),
        }
    }
    let out = groups
        .into_values()
        .map(|(line, events)| {
            let n = events.len();
            let t0 = events.first().map_or(0.0, |e| e.time);
            let t_end = events.last().map_or(0.0, |e| e.time);
            (line, EventSequence::new(events, t0, t_end), n)
        })
        .collect();
    Ok((out, total))
}

/// Separates tied timestamps and validates. Returns whether jitter was applied.
fn repair(seq: &mut EventSequence, marks: usize) -> Result<bool> {
    let tied = seq.events.windows(2).any(|w| w[1].time == w[0].time);
    if tied {
        for (i, e) in seq.events.iter_mut().enumerate() {
            e.time += TIE_JITTER * i as f64;
        }
        if let Some(last) = seq.events.last() {
            seq.t_end = seq.t_end.max(last.time);
        }
    }
    seq.validate(marks)?;
    Ok(tied)
}

pub fn mean_interval(sequences: &[EventSequence]) -> f64 {
    let (sum, count) = sequences.iter().fold((0.0, 0usize), |(s, c), seq| {
        let gaps = seq.events.windows(2).map(|w| w[1].time - w[0].time);
        (s + gaps.sum::<f64>(), c + seq.len().saturating_sub(1))
    });
    if count == 0 {
        1.0
    } else {
        sum / count as f64
    }
}
