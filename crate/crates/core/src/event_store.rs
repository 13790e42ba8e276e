//! Parsing, validation and per-user indexing of interaction logs.
//!
//! Two input encodings are accepted. JSONL carries one object per line:
//!
//! ```text
//! {"user_id": "u1", "timestamp": 1700000000, "content_id": "c9", "topics": ["a", "b"], "cluster_ids": [3, 7]}
//! ```
//!
//! where `timestamp` may also be an ISO-8601 string, and `cluster_ids` is optional.
//! CSV uses the header `user_id,timestamp,content_id,topics,cluster_ids` with the
//! two list columns `|`-separated.
//!
//! Malformed records never abort a parse. They are skipped and tallied in a
//! [`ValidationReport`] by category, together with the first line where each
//! category was seen.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Input encoding of an event stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = EventStoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(EventStoreError::UnknownFormat(other.to_owned())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EventStoreError {
    #[error("failed reading input: {0}")]
    Io(#[from] io::Error),
    #[error("unknown input format '{0}' (expected jsonl or csv)")]
    UnknownFormat(String),
    #[error("unknown user '{0}'")]
    UnknownUser(String),
    #[error("window length must be positive, got {0} days")]
    InvalidWindow(u32),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One viewed content item with its fine-grained topic tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub content_id: String,
    pub topics: Vec<String>,
    /// Second-level cluster of each entry in `topics`, once clustering has run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_ids: Option<Vec<u32>>,
}

impl InteractionEvent {
    /// Checks the cluster ids against a model with `k` clusters.
    pub fn clusters_within(&self, k: usize) -> bool {
        self.cluster_ids
            .as_ref()
            .is_some_and(|ids| ids.len() == self.topics.len() && ids.iter().all(|&c| (c as usize) < k))
    }
}

/// Rejection categories tallied by [`ValidationReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCategory {
    MalformedRecord,
    MissingField,
    InvalidType,
    InvalidTimestamp,
    EmptyTopics,
    ClusterLengthMismatch,
}

impl RejectCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MalformedRecord => "malformed_record",
            Self::MissingField => "missing_field",
            Self::InvalidType => "invalid_type",
            Self::InvalidTimestamp => "invalid_timestamp",
            Self::EmptyTopics => "empty_topics",
            Self::ClusterLengthMismatch => "cluster_length_mismatch",
        }
    }
}

impl fmt::Display for RejectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub by_category: BTreeMap<RejectCategory, usize>,
    /// First input line (1-based) at which each category was seen.
    pub first_lines: BTreeMap<RejectCategory, usize>,
}

impl ValidationReport {
    fn accept(&mut self) {
        self.total += 1;
        self.accepted += 1;
    }

    fn reject(&mut self, category: RejectCategory, line: usize) {
        self.total += 1;
        self.rejected += 1;
        *self.by_category.entry(category).or_default() += 1;
        self.first_lines.entry(category).or_insert(line);
    }
}

/// Immutable per-user interaction histories, each sorted by timestamp.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    users: BTreeMap<String, Vec<InteractionEvent>>,
}

impl EventLog {
    /// Builds a log from events in arbitrary order. Equal timestamps keep input order.
    pub fn from_events(events: impl IntoIterator<Item = InteractionEvent>) -> Self {
        let mut users: BTreeMap<String, Vec<InteractionEvent>> = BTreeMap::new();
        for event in events {
            users.entry(event.user_id.clone()).or_default().push(event);
        }
        for history in users.values_mut() {
            history.sort_by_key(|e| e.timestamp);
        }
        Self { users }
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn event_count(&self) -> usize {
        self.users.values().map(Vec::len).sum()
    }

    pub fn contains_user(&self, user: &str) -> bool {
        self.users.contains_key(user)
    }

    pub fn history(&self, user: &str) -> Result<&[InteractionEvent], EventStoreError> {
        self.users.get(user).map(Vec::as_slice).ok_or_else(|| EventStoreError::UnknownUser(user.to_owned()))
    }

    /// All events, grouped by user in user order, each group in time order.
    pub fn events(&self) -> impl Iterator<Item = &InteractionEvent> {
        self.users.values().flatten()
    }

    /// `[min_ts, max_ts]` over all events, `None` when empty.
    pub fn span(&self) -> Option<(i64, i64)> {
        let min = self.users.values().filter_map(|h| h.first()).map(|e| e.timestamp).min()?;
        let max = self.users.values().filter_map(|h| h.last()).map(|e| e.timestamp).max()?;
        Some((min, max))
    }

    /// Events of `user` with timestamp in `(t_end - w_days * 86400, t_end]`.
    pub fn slice_window(&self, user: &str, t_end: i64, w_days: u32) -> Result<&[InteractionEvent], EventStoreError> {
        if w_days == 0 {
            return Err(EventStoreError::InvalidWindow(w_days));
        }
        let history = self.history(user)?;
        let t_start = t_end - i64::from(w_days) * SECONDS_PER_DAY;
        let lo = history.partition_point(|e| e.timestamp <= t_start);
        let hi = history.partition_point(|e| e.timestamp <= t_end);
        Ok(&history[lo..hi.max(lo)])
    }

    /// Rewrites every event's `cluster_ids` through `lookup`, which maps a topic
    /// phrase to its cluster. Phrases `lookup` cannot resolve leave the event
    /// unclustered; the number of such events is returned.
    pub fn with_clusters(&self, mut lookup: impl FnMut(&str) -> Option<u32>) -> (EventLog, usize) {
        let mut unresolved = 0;
        let users = self
            .users
            .iter()
            .map(|(user, history)| {
                let history = history
                    .iter()
                    .map(|e| {
                        let ids: Option<Vec<u32>> = e.topics.iter().map(|t| lookup(t)).collect();
                        if ids.is_none() {
                            unresolved += 1;
                        }
                        InteractionEvent { cluster_ids: ids, ..e.clone() }
                    })
                    .collect();
                (user.clone(), history)
            })
            .collect();
        (EventLog { users }, unresolved)
    }

    /// Adds `offset` seconds to every timestamp.
    pub fn shifted(&self, offset: i64) -> EventLog {
        EventLog::from_events(self.events().map(|e| InteractionEvent { timestamp: e.timestamp + offset, ..e.clone() }))
    }

    pub fn merge(logs: impl IntoIterator<Item = EventLog>) -> EventLog {
        EventLog::from_events(logs.into_iter().flat_map(|log| log.users.into_values().flatten()))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for event in self.events() {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// CSV form. Topic phrases containing `|` do not survive a round trip.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EventStoreError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(CSV_HEADER)?;
        for e in self.events() {
            let clusters = e
                .cluster_ids
                .as_ref()
                .map(|ids| ids.iter().map(u32::to_string).collect::<Vec<_>>().join("|"))
                .unwrap_or_default();
            writer.write_record([
                e.user_id.as_str(),
                &e.timestamp.to_string(),
                e.content_id.as_str(),
                &e.topics.join("|"),
                &clusters,
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

const CSV_HEADER: [&str; 5] = ["user_id", "timestamp", "content_id", "topics", "cluster_ids"];

/// Parses an event stream, skipping and tallying malformed records.
pub fn parse_events<R: Read>(stream: R, format: Format) -> Result<(EventLog, ValidationReport), EventStoreError> {
    let mut report = ValidationReport::default();
    let mut events = Vec::new();
    match format {
        Format::Jsonl => parse_jsonl(stream, &mut events, &mut report)?,
        Format::Csv => parse_csv(stream, &mut events, &mut report)?,
    }
    Ok((EventLog::from_events(events), report))
}

fn parse_jsonl<R: Read>(
    stream: R,
    events: &mut Vec<InteractionEvent>,
    report: &mut ValidationReport,
) -> Result<(), EventStoreError> {
    let mut reader = BufReader::new(stream);
    let mut raw = Vec::new();
    let mut line_no = 0;
    loop {
        raw.clear();
        if reader.read_until(b'\n', &mut raw)? == 0 {
            break;
        }
        line_no += 1;
        let Ok(line) = std::str::from_utf8(&raw) else {
            report.reject(RejectCategory::MalformedRecord, line_no);
            continue;
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(line)
            .map_err(|_| RejectCategory::MalformedRecord)
            .and_then(|v| event_from_json(&v))
        {
            Ok(event) => {
                report.accept();
                events.push(event);
            }
            Err(category) => report.reject(category, line_no),
        }
    }
    Ok(())
}

fn event_from_json(value: &Value) -> Result<InteractionEvent, RejectCategory> {
    let object = value.as_object().ok_or(RejectCategory::MalformedRecord)?;
    let user_id = string_field(object, "user_id")?;
    let timestamp = match object.get("timestamp") {
        None | Some(Value::Null) => return Err(RejectCategory::MissingField),
        Some(Value::Number(n)) => n.as_i64().ok_or(RejectCategory::InvalidTimestamp)?,
        Some(Value::String(s)) => parse_timestamp(s)?,
        Some(_) => return Err(RejectCategory::InvalidType),
    };
    let content_id = string_field(object, "content_id")?;
    let topics = match object.get("topics") {
        None | Some(Value::Null) => return Err(RejectCategory::MissingField),
        Some(Value::Array(items)) => items
            .iter()
            .map(|t| t.as_str().map(str::to_owned).ok_or(RejectCategory::InvalidType))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(RejectCategory::InvalidType),
    };
    let cluster_ids = match object.get("cluster_ids") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|c| c.as_u64().and_then(|c| u32::try_from(c).ok()).ok_or(RejectCategory::InvalidType))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(_) => return Err(RejectCategory::InvalidType),
    };
    validated(user_id, timestamp, content_id, topics, cluster_ids)
}

fn string_field(object: &Map<String, Value>, field: &str) -> Result<String, RejectCategory> {
    match object.get(field) {
        None | Some(Value::Null) => Err(RejectCategory::MissingField),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(RejectCategory::InvalidType),
    }
}

fn validated(
    user_id: String,
    timestamp: i64,
    content_id: String,
    topics: Vec<String>,
    cluster_ids: Option<Vec<u32>>,
) -> Result<InteractionEvent, RejectCategory> {
    if timestamp < 0 {
        return Err(RejectCategory::InvalidTimestamp);
    }
    if topics.is_empty() || topics.iter().any(|t| t.trim().is_empty()) {
        return Err(RejectCategory::EmptyTopics);
    }
    if cluster_ids.as_ref().is_some_and(|ids| ids.len() != topics.len()) {
        return Err(RejectCategory::ClusterLengthMismatch);
    }
    Ok(InteractionEvent { user_id, timestamp, content_id, topics, cluster_ids })
}

/// Accepts epoch seconds, RFC 3339, or a naive `YYYY-MM-DDTHH:MM:SS` taken as UTC.
pub fn parse_timestamp(raw: &str) -> Result<i64, RejectCategory> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Ok(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
        .ok_or(RejectCategory::InvalidTimestamp)
}

fn parse_csv<R: Read>(
    stream: R,
    events: &mut Vec<InteractionEvent>,
    report: &mut ValidationReport,
) -> Result<(), EventStoreError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(stream);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let columns = CSV_HEADER.map(column);

    for (idx, record) in reader.records().enumerate() {
        match record {
            Ok(record) => {
                let line = record.position().map_or(idx + 2, |p| p.line() as usize);
                match event_from_csv(&record, &columns) {
                    Ok(event) => {
                        report.accept();
                        events.push(event);
                    }
                    Err(category) => report.reject(category, line),
                }
            }
            Err(err) if err.is_io_error() => return Err(err.into()),
            Err(err) => {
                let line = err.position().map_or(idx + 2, |p| p.line() as usize);
                report.reject(RejectCategory::MalformedRecord, line);
            }
        }
    }
    Ok(())
}

fn event_from_csv(
    record: &csv::StringRecord,
    columns: &[Option<usize>; 5],
) -> Result<InteractionEvent, RejectCategory> {
    let field =
        |i: usize| -> Option<&str> { columns[i].and_then(|c| record.get(c)).map(str::trim).filter(|s| !s.is_empty()) };
    let user_id = field(0).ok_or(RejectCategory::MissingField)?.to_owned();
    let timestamp = parse_timestamp(field(1).ok_or(RejectCategory::MissingField)?)?;
    let content_id = field(2).ok_or(RejectCategory::MissingField)?.to_owned();
    let topics: Vec<String> = field(3).ok_or(RejectCategory::MissingField)?.split('|').map(str::to_owned).collect();
    let cluster_ids = field(4)
        .map(|raw| {
            raw.split('|')
                .map(|c| c.trim().parse::<u32>().map_err(|_| RejectCategory::InvalidType))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    validated(user_id, timestamp, content_id, topics, cluster_ids)
}
