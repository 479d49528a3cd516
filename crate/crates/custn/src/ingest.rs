//! Log readers, sessionization, and the leakage-free timeline split.
//!
//! Readers accept CSV (named header columns) and JSONL, optionally gzipped
//! by file extension. Timestamp fields take integer epoch milliseconds or
//! RFC 3339 strings. Malformed rows become [`RowError`]s: lenient reads
//! collect them next to the good events, strict reads stop at the first
//! one.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde_json::Value;
use thiserror::Error;

use crate::event::{
    validate_impression, validate_interaction, ImpressionEvent, InteractionEvent,
    InteractionKind, RankedList, RawImpression, RawInteraction, RelevanceSet, RowError,
    RowErrorKind, Session,
};

pub const MS_PER_DAY: i64 = 86_400_000;
pub const DEFAULT_GAP_MINUTES: u32 = 30;
pub const DEFAULT_WINDOW_DAYS: u32 = 90;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {path}")]
    FileNotFound { path: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: format mismatch: {detail}")]
    FormatMismatch { path: String, detail: String },
    #[error("{path}: {source}")]
    Row {
        path: String,
        #[source]
        source: RowError,
    },
    #[error("customer `{customer_id}` mixes events with and without session ids")]
    MixedSessionIdPresence { customer_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl LogFormat {
    /// Picks the format from the file name, looking through a trailing
    /// `.gz` if present.
    pub fn from_path(path: &Path) -> Option<LogFormat> {
        let name = path.file_name()?.to_str()?;
        let name = name.strip_suffix(".gz").unwrap_or(name);
        if name.ends_with(".csv") {
            Some(LogFormat::Csv)
        } else if name.ends_with(".jsonl") || name.ends_with(".ndjson") {
            Some(LogFormat::Jsonl)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Stop at the first malformed row instead of collecting it.
    pub strict: bool,
    /// Drop repeated (customer, session, item, rank) rows. Off by default:
    /// duplicates are legitimate re-impressions.
    pub dedup: bool,
}

/// Events plus whatever went wrong while reading them.
#[derive(Debug, Default)]
pub struct ImpressionBatch {
    pub events: Vec<ImpressionEvent>,
    pub errors: Vec<RowError>,
    pub rows_read: u64,
}

#[derive(Debug, Default)]
pub struct InteractionBatch {
    pub events: Vec<InteractionEvent>,
    pub errors: Vec<RowError>,
    pub rows_read: u64,
}

/// Parses a timestamp field: integer epoch milliseconds or RFC 3339.
pub fn parse_timestamp_text(text: &str) -> Option<i64> {
    let text = text.trim();
    if let Ok(ms) = text.parse::<i64>() {
        return Some(ms);
    }
    chrono::DateTime::parse_from_rfc3339(text)
        .ok()
        .map(|dt| dt.timestamp_millis())
}

pub(crate) fn open_buffered(path: &Path) -> Result<Box<dyn BufRead>, IngestError> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            IngestError::FileNotFound {
                path: path.display().to_string(),
            }
        } else {
            IngestError::Io {
                path: path.display().to_string(),
                source: e,
            }
        }
    })?;
    let gz = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("gz"))
        .unwrap_or(false);
    if gz {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn detect_format(path: &Path) -> Result<LogFormat, IngestError> {
    LogFormat::from_path(path).ok_or_else(|| IngestError::FormatMismatch {
        path: path.display().to_string(),
        detail: "cannot infer format from extension (expected .csv or .jsonl, optionally .gz)"
            .to_string(),
    })
}

// Column layout for impression CSV files. session_id is optional at the
// column level; every other column must exist in the header.
struct ImpressionCols {
    customer_id: usize,
    session_id: Option<usize>,
    timestamp: usize,
    item_id: usize,
    rank: usize,
}

fn find_col(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

impl ImpressionCols {
    fn from_headers(headers: &csv::StringRecord) -> Result<Self, String> {
        let need = |name: &str| {
            find_col(headers, name).ok_or_else(|| format!("missing required column `{name}`"))
        };
        Ok(ImpressionCols {
            customer_id: need("customer_id")?,
            session_id: find_col(headers, "session_id"),
            timestamp: need("timestamp")?,
            item_id: need("item_id")?,
            rank: need("rank")?,
        })
    }
}

struct InteractionCols {
    customer_id: usize,
    timestamp: usize,
    item_id: usize,
    kind: usize,
}

impl InteractionCols {
    fn from_headers(headers: &csv::StringRecord) -> Result<Self, String> {
        let need = |name: &str| {
            find_col(headers, name).ok_or_else(|| format!("missing required column `{name}`"))
        };
        Ok(InteractionCols {
            customer_id: need("customer_id")?,
            timestamp: need("timestamp")?,
            item_id: need("item_id")?,
            kind: need("kind")?,
        })
    }
}

fn parse_ts_field(text: &str, row: u64) -> Result<i64, RowError> {
    parse_timestamp_text(text).ok_or(RowError {
        row,
        kind: RowErrorKind::InvalidTimestamp {
            value: text.to_string(),
        },
    })
}

fn parse_rank_field(text: &str, row: u64) -> Result<i64, RowError> {
    text.trim().parse::<i64>().map_err(|_| RowError {
        row,
        kind: RowErrorKind::InvalidRank {
            value: text.to_string(),
        },
    })
}

fn nonblank(field: Option<&str>) -> Option<String> {
    field.map(|s| s.trim().to_string())
}

enum RowsInner<R: Read> {
    Csv {
        rdr: csv::Reader<R>,
        record: csv::StringRecord,
    },
    Jsonl {
        lines: Lines<BufReader<R>>,
        line_no: u64,
    },
}

/// Streaming impression reader; yields validated events in file order.
pub struct ImpressionReader<R: Read> {
    inner: RowsInner<R>,
    cols: Option<ImpressionCols>,
    header_error: Option<String>,
    pub rows_read: u64,
}

impl<R: Read> ImpressionReader<R> {
    pub fn from_reader(reader: R, format: LogFormat) -> Self {
        match format {
            LogFormat::Csv => {
                let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
                let (cols, header_error) = match rdr.headers() {
                    Ok(h) => match ImpressionCols::from_headers(h) {
                        Ok(c) => (Some(c), None),
                        Err(e) => (None, Some(e)),
                    },
                    Err(e) => (None, Some(e.to_string())),
                };
                ImpressionReader {
                    inner: RowsInner::Csv {
                        rdr,
                        record: csv::StringRecord::new(),
                    },
                    cols,
                    header_error,
                    rows_read: 0,
                }
            }
            LogFormat::Jsonl => ImpressionReader {
                inner: RowsInner::Jsonl {
                    lines: BufReader::new(reader).lines(),
                    line_no: 0,
                },
                cols: None,
                header_error: None,
                rows_read: 0,
            },
        }
    }

    /// The header problem, if the CSV header was unusable. Callers treat
    /// this as a file-level format mismatch.
    pub fn header_error(&self) -> Option<&str> {
        self.header_error.as_deref()
    }
}

fn json_string(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    }
}

fn json_ts(obj: &serde_json::Map<String, Value>, key: &str, row: u64) -> Result<Option<i64>, RowError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n.as_i64().map(Some).ok_or(RowError {
            row,
            kind: RowErrorKind::InvalidTimestamp {
                value: n.to_string(),
            },
        }),
        Some(Value::String(s)) => parse_ts_field(s, row).map(Some),
        Some(other) => Err(RowError {
            row,
            kind: RowErrorKind::InvalidTimestamp {
                value: other.to_string(),
            },
        }),
    }
}

fn json_rank(obj: &serde_json::Map<String, Value>, key: &str, row: u64) -> Result<Option<i64>, RowError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n.as_i64().map(Some).ok_or(RowError {
            row,
            kind: RowErrorKind::InvalidRank {
                value: n.to_string(),
            },
        }),
        Some(Value::String(s)) => parse_rank_field(s, row).map(Some),
        Some(other) => Err(RowError {
            row,
            kind: RowErrorKind::InvalidRank {
                value: other.to_string(),
            },
        }),
    }
}

/// Parses one JSONL line into an object map, skipping blank lines.
fn json_object_for_line(line: &str, row: u64) -> Result<Option<serde_json::Map<String, Value>>, RowError> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let value: Value = serde_json::from_str(trimmed).map_err(|e| RowError {
        row,
        kind: RowErrorKind::InvalidRow {
            detail: e.to_string(),
        },
    })?;
    match value {
        Value::Object(map) => Ok(Some(map)),
        _ => Err(RowError {
            row,
            kind: RowErrorKind::InvalidRow {
                detail: "line is not a JSON object".to_string(),
            },
        }),
    }
}

impl<R: Read> Iterator for ImpressionReader<R> {
    type Item = Result<ImpressionEvent, RowError>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            RowsInner::Csv { rdr, record, .. } => {
                let cols = self.cols.as_ref()?;
                loop {
                    match rdr.read_record(record) {
                        Ok(false) => return None,
                        Ok(true) => {
                            self.rows_read += 1;
                            let row = record.position().map(|p| p.line()).unwrap_or(0);
                            let ts = match nonblank(record.get(cols.timestamp)) {
                                Some(t) if !t.is_empty() => match parse_ts_field(&t, row) {
                                    Ok(v) => Some(v),
                                    Err(e) => return Some(Err(e)),
                                },
                                _ => None,
                            };
                            let rank = match nonblank(record.get(cols.rank)) {
                                Some(t) if !t.is_empty() => match parse_rank_field(&t, row) {
                                    Ok(v) => Some(v),
                                    Err(e) => return Some(Err(e)),
                                },
                                _ => None,
                            };
                            let raw = RawImpression {
                                customer_id: nonblank(record.get(cols.customer_id)),
                                session_id: cols
                                    .session_id
                                    .and_then(|i| nonblank(record.get(i))),
                                timestamp: ts,
                                item_id: nonblank(record.get(cols.item_id)),
                                rank,
                            };
                            return Some(validate_impression(raw, row));
                        }
                        Err(e) => {
                            self.rows_read += 1;
                            let row = e
                                .position()
                                .map(|p| p.line())
                                .unwrap_or(self.rows_read + 1);
                            return Some(Err(RowError {
                                row,
                                kind: RowErrorKind::InvalidRow {
                                    detail: e.to_string(),
                                },
                            }));
                        }
                    }
                }
            }
            RowsInner::Jsonl { lines, line_no } => loop {
                let line = match lines.next()? {
                    Ok(l) => l,
                    Err(e) => {
                        *line_no += 1;
                        return Some(Err(RowError {
                            row: *line_no,
                            kind: RowErrorKind::InvalidRow {
                                detail: e.to_string(),
                            },
                        }));
                    }
                };
                *line_no += 1;
                let row = *line_no;
                let obj = match json_object_for_line(&line, row) {
                    Ok(Some(o)) => o,
                    Ok(None) => continue,
                    Err(e) => return Some(Err(e)),
                };
                self.rows_read += 1;
                let ts = match json_ts(&obj, "timestamp", row) {
                    Ok(v) => v,
                    Err(e) => return Some(Err(e)),
                };
                let rank = match json_rank(&obj, "rank", row) {
                    Ok(v) => v,
                    Err(e) => return Some(Err(e)),
                };
                let raw = RawImpression {
                    customer_id: json_string(&obj, "customer_id"),
                    session_id: json_string(&obj, "session_id"),
                    timestamp: ts,
                    item_id: json_string(&obj, "item_id"),
                    rank,
                };
                return Some(validate_impression(raw, row));
            },
        }
    }
}

/// Streaming interaction reader; same conventions as [`ImpressionReader`].
pub struct InteractionReader<R: Read> {
    inner: RowsInner<R>,
    cols: Option<InteractionCols>,
    header_error: Option<String>,
    pub rows_read: u64,
}

impl<R: Read> InteractionReader<R> {
    pub fn from_reader(reader: R, format: LogFormat) -> Self {
        match format {
            LogFormat::Csv => {
                let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
                let (cols, header_error) = match rdr.headers() {
                    Ok(h) => match InteractionCols::from_headers(h) {
                        Ok(c) => (Some(c), None),
                        Err(e) => (None, Some(e.to_string())),
                    },
                    Err(e) => (None, Some(e.to_string())),
                };
                InteractionReader {
                    inner: RowsInner::Csv {
                        rdr,
                        record: csv::StringRecord::new(),
                    },
                    cols,
                    header_error,
                    rows_read: 0,
                }
            }
            LogFormat::Jsonl => InteractionReader {
                inner: RowsInner::Jsonl {
                    lines: BufReader::new(reader).lines(),
                    line_no: 0,
                },
                cols: None,
                header_error: None,
                rows_read: 0,
            },
        }
    }

    pub fn header_error(&self) -> Option<&str> {
        self.header_error.as_deref()
    }
}

fn parse_kind_field(text: &str, row: u64) -> Result<InteractionKind, RowError> {
    text.trim().parse::<InteractionKind>().map_err(|_| RowError {
        row,
        kind: RowErrorKind::InvalidKind {
            value: text.to_string(),
        },
    })
}

impl<R: Read> Iterator for InteractionReader<R> {
    type Item = Result<InteractionEvent, RowError>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            RowsInner::Csv { rdr, record, .. } => {
                let cols = self.cols.as_ref()?;
                match rdr.read_record(record) {
                    Ok(false) => None,
                    Ok(true) => {
                        self.rows_read += 1;
                        let row = record.position().map(|p| p.line()).unwrap_or(0);
                        let ts = match nonblank(record.get(cols.timestamp)) {
                            Some(t) if !t.is_empty() => match parse_ts_field(&t, row) {
                                Ok(v) => Some(v),
                                Err(e) => return Some(Err(e)),
                            },
                            _ => None,
                        };
                        let kind = match nonblank(record.get(cols.kind)) {
                            Some(t) if !t.is_empty() => match parse_kind_field(&t, row) {
                                Ok(v) => Some(v),
                                Err(e) => return Some(Err(e)),
                            },
                            _ => None,
                        };
                        let raw = RawInteraction {
                            customer_id: nonblank(record.get(cols.customer_id)),
                            timestamp: ts,
                            item_id: nonblank(record.get(cols.item_id)),
                            kind,
                        };
                        Some(validate_interaction(raw, row))
                    }
                    Err(e) => {
                        self.rows_read += 1;
                        let row = e
                            .position()
                            .map(|p| p.line())
                            .unwrap_or(self.rows_read + 1);
                        Some(Err(RowError {
                            row,
                            kind: RowErrorKind::InvalidRow {
                                detail: e.to_string(),
                            },
                        }))
                    }
                }
            }
            RowsInner::Jsonl { lines, line_no } => loop {
                let line = match lines.next()? {
                    Ok(l) => l,
                    Err(e) => {
                        *line_no += 1;
                        return Some(Err(RowError {
                            row: *line_no,
                            kind: RowErrorKind::InvalidRow {
                                detail: e.to_string(),
                            },
                        }));
                    }
                };
                *line_no += 1;
                let row = *line_no;
                let obj = match json_object_for_line(&line, row) {
                    Ok(Some(o)) => o,
                    Ok(None) => continue,
                    Err(e) => return Some(Err(e)),
                };
                self.rows_read += 1;
                let ts = match json_ts(&obj, "timestamp", row) {
                    Ok(v) => v,
                    Err(e) => return Some(Err(e)),
                };
                let kind = match obj.get("kind") {
                    None | Some(Value::Null) => None,
                    Some(Value::String(s)) => match parse_kind_field(s, row) {
                        Ok(k) => Some(k),
                        Err(e) => return Some(Err(e)),
                    },
                    Some(other) => {
                        return Some(Err(RowError {
                            row,
                            kind: RowErrorKind::InvalidKind {
                                value: other.to_string(),
                            },
                        }))
                    }
                };
                let raw = RawInteraction {
                    customer_id: json_string(&obj, "customer_id"),
                    timestamp: ts,
                    item_id: json_string(&obj, "item_id"),
                    kind,
                };
                return Some(validate_interaction(raw, row));
            },
        }
    }
}

fn check_header(path: &Path, header_error: Option<&str>) -> Result<(), IngestError> {
    if let Some(detail) = header_error {
        return Err(IngestError::FormatMismatch {
            path: path.display().to_string(),
            detail: detail.to_string(),
        });
    }
    Ok(())
}

/// Reads a whole impression file. Lenient mode collects row errors; strict
/// mode fails on the first. Format is inferred from the extension.
pub fn read_impressions(path: &Path, opts: IngestOptions) -> Result<ImpressionBatch, IngestError> {
    let format = detect_format(path)?;
    let reader = ImpressionReader::from_reader(open_buffered(path)?, format);
    check_header(path, reader.header_error())?;

    let mut batch = ImpressionBatch::default();
    let mut seen: HashSet<(String, Option<String>, String, u32)> = HashSet::new();
    for item in reader {
        batch.rows_read += 1;
        match item {
            Ok(ev) => {
                if opts.dedup {
                    let key = (
                        ev.customer_id.clone(),
                        ev.session_id.clone(),
                        ev.item_id.clone(),
                        ev.rank,
                    );
                    if !seen.insert(key) {
                        continue;
                    }
                }
                batch.events.push(ev);
            }
            Err(e) => {
                if opts.strict {
                    return Err(IngestError::Row {
                        path: path.display().to_string(),
                        source: e,
                    });
                }
                batch.errors.push(e);
            }
        }
    }
    Ok(batch)
}

/// Interaction counterpart of [`read_impressions`].
pub fn read_interactions(
    path: &Path,
    opts: IngestOptions,
) -> Result<InteractionBatch, IngestError> {
    let format = detect_format(path)?;
    let reader = InteractionReader::from_reader(open_buffered(path)?, format);
    check_header(path, reader.header_error())?;

    let mut batch = InteractionBatch::default();
    for item in reader {
        batch.rows_read += 1;
        match item {
            Ok(ev) => batch.events.push(ev),
            Err(e) => {
                if opts.strict {
                    return Err(IngestError::Row {
                        path: path.display().to_string(),
                        source: e,
                    });
                }
                batch.errors.push(e);
            }
        }
    }
    Ok(batch)
}

/// Groups impressions into sessions.
///
/// Customers whose events carry explicit session ids are grouped by
/// (customer_id, session_id). Customers without ids get gap-derived
/// sessions: events sorted by timestamp, split where the gap to the
/// previous event exceeds `gap_ms`. A customer mixing both conventions is
/// an error. Output is sorted by (customer_id, start_ts, session_key) and
/// is invariant to input permutation.
pub fn sessionize(events: &[ImpressionEvent], gap_ms: i64) -> Result<Vec<Session>, IngestError> {
    assert!(gap_ms > 0, "gap_ms must be positive");

    let mut per_customer: HashMap<&str, Vec<&ImpressionEvent>> = HashMap::new();
    for ev in events {
        per_customer.entry(&ev.customer_id).or_default().push(ev);
    }

    let mut sessions = Vec::new();
    for (customer_id, evs) in &per_customer {
        let with_id = evs.iter().filter(|e| e.session_id.is_some()).count();
        if with_id != 0 && with_id != evs.len() {
            return Err(IngestError::MixedSessionIdPresence {
                customer_id: customer_id.to_string(),
            });
        }
        if with_id == evs.len() {
            let mut groups: HashMap<&str, (i64, i64, u32)> = HashMap::new();
            for ev in evs.iter() {
                let key = ev.session_id.as_deref().unwrap();
                let entry = groups
                    .entry(key)
                    .or_insert((ev.timestamp, ev.timestamp, ev.rank));
                entry.0 = entry.0.min(ev.timestamp);
                entry.1 = entry.1.max(ev.timestamp);
                entry.2 = entry.2.max(ev.rank);
            }
            for (key, (start_ts, end_ts, max_rank)) in groups {
                sessions.push(Session {
                    customer_id: customer_id.to_string(),
                    session_key: key.to_string(),
                    start_ts,
                    end_ts,
                    max_rank,
                });
            }
        } else {
            let mut sorted: Vec<&ImpressionEvent> = evs.clone();
            sorted.sort_unstable_by_key(|e| e.timestamp);
            // Derived keys use the session start timestamp: distinct by
            // construction, stable under input permutation.
            let mut cur: Option<(i64, i64, u32)> = None;
            for ev in sorted {
                match cur.as_mut() {
                    Some((_, end, max_rank)) if ev.timestamp - *end <= gap_ms => {
                        *end = ev.timestamp;
                        *max_rank = (*max_rank).max(ev.rank);
                    }
                    _ => {
                        if let Some((start_ts, end_ts, max_rank)) = cur.take() {
                            sessions.push(Session {
                                customer_id: customer_id.to_string(),
                                session_key: format!("t{start_ts}"),
                                start_ts,
                                end_ts,
                                max_rank,
                            });
                        }
                        cur = Some((ev.timestamp, ev.timestamp, ev.rank));
                    }
                }
            }
            if let Some((start_ts, end_ts, max_rank)) = cur {
                sessions.push(Session {
                    customer_id: customer_id.to_string(),
                    session_key: format!("t{start_ts}"),
                    start_ts,
                    end_ts,
                    max_rank,
                });
            }
        }
    }

    sessions.sort_unstable_by(|a, b| {
        (a.customer_id.as_str(), a.start_ts, a.session_key.as_str()).cmp(&(
            b.customer_id.as_str(),
            b.start_ts,
            b.session_key.as_str(),
        ))
    });
    Ok(sessions)
}

/// Cutoff plus trailing history window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimelineSplit {
    /// Evaluation starts here; history ends strictly before it.
    pub cutoff_ts: i64,
    pub history_window_days: u32,
}

impl TimelineSplit {
    pub fn window_start(&self) -> i64 {
        self.cutoff_ts - i64::from(self.history_window_days) * MS_PER_DAY
    }
}

/// Selects history sessions by start timestamp: `[cutoff - X days, cutoff)`.
/// Returns the history plus the evaluation start boundary.
pub fn split_timeline(sessions: &[Session], split: &TimelineSplit) -> (Vec<Session>, i64) {
    let lo = split.window_start();
    let history: Vec<Session> = sessions
        .iter()
        .filter(|s| s.start_ts >= lo && s.start_ts < split.cutoff_ts)
        .cloned()
        .collect();
    // Leakage guard: nothing at or past the cutoff may enter history.
    assert!(
        history.iter().all(|s| s.start_ts < split.cutoff_ts),
        "history contains a session at or past the cutoff"
    );
    (history, split.cutoff_ts)
}

/// Builds per-customer relevance from interactions at or after
/// `evaluation_start`, restricted to the given kinds. Customers with no
/// qualifying interaction are absent.
pub fn derive_relevance(
    interactions: &[InteractionEvent],
    evaluation_start: i64,
    kinds: &BTreeSet<InteractionKind>,
) -> BTreeMap<String, RelevanceSet> {
    let mut out: BTreeMap<String, RelevanceSet> = BTreeMap::new();
    for ev in interactions {
        if ev.timestamp < evaluation_start || !kinds.contains(&ev.kind) {
            continue;
        }
        out.entry(ev.customer_id.clone())
            .or_insert_with(|| RelevanceSet {
                customer_id: ev.customer_id.clone(),
                relevant_items: BTreeSet::new(),
            })
            .relevant_items
            .insert(ev.item_id.clone());
    }
    out
}

/// Reads a customer-to-segment CSV (columns `customer_id, segment`).
pub fn read_segments_from_reader<R: Read>(
    reader: R,
) -> Result<(BTreeMap<String, String>, Vec<RowError>), String> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let customer_col = find_col(&headers, "customer_id")
        .ok_or_else(|| "missing required column `customer_id`".to_string())?;
    let segment_col = find_col(&headers, "segment")
        .ok_or_else(|| "missing required column `segment`".to_string())?;

    let mut map = BTreeMap::new();
    let mut errors = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let row = record.position().map(|p| p.line()).unwrap_or(0);
                let customer = nonblank(record.get(customer_col)).unwrap_or_default();
                let segment = nonblank(record.get(segment_col)).unwrap_or_default();
                if customer.is_empty() {
                    errors.push(RowError {
                        row,
                        kind: RowErrorKind::EmptyKey { field: "customer_id" },
                    });
                    continue;
                }
                if segment.is_empty() {
                    errors.push(RowError {
                        row,
                        kind: RowErrorKind::EmptyKey { field: "segment" },
                    });
                    continue;
                }
                map.insert(customer, segment);
            }
            Err(e) => {
                let row = e.position().map(|p| p.line()).unwrap_or(0);
                errors.push(RowError {
                    row,
                    kind: RowErrorKind::InvalidRow {
                        detail: e.to_string(),
                    },
                });
            }
        }
    }
    Ok((map, errors))
}

pub fn read_segments(
    path: &Path,
    strict: bool,
) -> Result<(BTreeMap<String, String>, Vec<RowError>), IngestError> {
    let reader = open_buffered(path)?;
    let (map, errors) =
        read_segments_from_reader(reader).map_err(|detail| IngestError::FormatMismatch {
            path: path.display().to_string(),
            detail,
        })?;
    if strict {
        if let Some(e) = errors.into_iter().next() {
            return Err(IngestError::Row {
                path: path.display().to_string(),
                source: e,
            });
        }
        return Ok((map, Vec::new()));
    }
    Ok((map, errors))
}

/// Reads ranked lists from JSONL lines shaped
/// `{"customer_id": "...", "items": ["...", ...]}`. The first list per
/// customer wins; later repeats are reported.
pub fn read_ranked_lists_from_reader<R: Read>(
    reader: R,
) -> (BTreeMap<String, RankedList>, Vec<RowError>) {
    let mut lists: BTreeMap<String, RankedList> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut row = 0u64;
    for line in BufReader::new(reader).lines() {
        row += 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                errors.push(RowError {
                    row,
                    kind: RowErrorKind::InvalidRow {
                        detail: e.to_string(),
                    },
                });
                continue;
            }
        };
        let obj = match json_object_for_line(&line, row) {
            Ok(Some(o)) => o,
            Ok(None) => continue,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let customer_id = match json_string(&obj, "customer_id").filter(|s| !s.is_empty()) {
            Some(c) => c,
            None => {
                errors.push(RowError {
                    row,
                    kind: RowErrorKind::MissingField { field: "customer_id" },
                });
                continue;
            }
        };
        let items: Vec<String> = match obj.get("items") {
            Some(Value::Array(arr)) => {
                let mut out = Vec::with_capacity(arr.len());
                let mut bad = false;
                for v in arr {
                    match v {
                        Value::String(s) => out.push(s.clone()),
                        _ => {
                            errors.push(RowError {
                                row,
                                kind: RowErrorKind::InvalidRow {
                                    detail: "items must be strings".to_string(),
                                },
                            });
                            bad = true;
                            break;
                        }
                    }
                }
                if bad {
                    continue;
                }
                out
            }
            _ => {
                errors.push(RowError {
                    row,
                    kind: RowErrorKind::MissingField { field: "items" },
                });
                continue;
            }
        };
        match RankedList::new(customer_id.clone(), items) {
            Ok(list) => {
                if lists.contains_key(&customer_id) {
                    errors.push(RowError {
                        row,
                        kind: RowErrorKind::DuplicateCustomer { customer_id },
                    });
                } else {
                    lists.insert(customer_id, list);
                }
            }
            Err(e) => errors.push(RowError {
                row,
                kind: RowErrorKind::DuplicateItem { item_id: e.item_id },
            }),
        }
    }
    (lists, errors)
}

pub fn read_ranked_lists(
    path: &Path,
    strict: bool,
) -> Result<(BTreeMap<String, RankedList>, Vec<RowError>), IngestError> {
    let reader = open_buffered(path)?;
    let (lists, errors) = read_ranked_lists_from_reader(reader);
    if strict {
        if let Some(e) = errors.into_iter().next() {
            return Err(IngestError::Row {
                path: path.display().to_string(),
                source: e,
            });
        }
        return Ok((lists, Vec::new()));
    }
    Ok((lists, errors))
}
