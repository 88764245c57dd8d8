use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::model::{Action, Dataset, Event, Mark};

/// First line of a native event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub format_version: u64,
    pub horizon: f64,
    pub num_users: usize,
    pub num_tags: usize,
    #[serde(default = "default_unit")]
    pub time_unit: String,
}

fn default_unit() -> String {
    "days".into()
}

/// One event line: `mark` is the tag of a question or the row index of the
/// answered question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventLogRecord {
    pub time: f64,
    pub user: usize,
    pub kind: RecordKind,
    pub mark: usize,
    /// Whether the event counts toward badge progress; omitted when true.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub badge: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordKind {
    #[serde(rename = "q")]
    Question,
    #[serde(rename = "a")]
    Answer,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Stable-sort out-of-order records (remapping parent rows) instead of rejecting.
    pub sort_unsorted: bool,
}

impl From<&Event> for EventLogRecord {
    fn from(e: &Event) -> Self {
        let (kind, mark) = match e.mark {
            Mark::Question { tag } => (RecordKind::Question, tag),
            Mark::Answer { parent } => (RecordKind::Answer, parent),
        };
        EventLogRecord { time: e.time, user: e.user, kind, mark, badge: (!e.counts_toward_badge).then_some(false) }
    }
}

pub fn write_events<W: Write>(dataset: &Dataset, time_unit: &str, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    let header = LogHeader {
        format_version: FORMAT_VERSION,
        horizon: dataset.horizon(),
        num_users: dataset.num_users(),
        num_tags: dataset.num_tags(),
        time_unit: time_unit.to_string(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for e in dataset.events() {
        serde_json::to_writer(&mut w, &EventLogRecord::from(e))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_events(path: &Path, dataset: &Dataset, time_unit: &str) -> Result<()> {
    write_events(dataset, time_unit, super::create(path)?)
}

/// Check `(line, record)` rows in file order and assemble them into a dataset.
pub(crate) fn assemble(
    mut rows: Vec<(usize, EventLogRecord)>,
    horizon: f64,
    num_users: usize,
    num_tags: usize,
    options: LoadOptions,
) -> Result<Dataset> {
    for (line, r) in &rows {
        if !(r.time.is_finite() && r.time >= 0.0 && r.time <= horizon) {
            return Err(Error::Parse { line: *line, message: format!("time {} outside [0, {horizon}]", r.time) });
        }
        if r.user >= num_users {
            return Err(Error::Parse { line: *line, message: format!("unknown user {} (U={num_users})", r.user) });
        }
        match r.kind {
            RecordKind::Question if r.mark >= num_tags => {
                return Err(Error::Parse { line: *line, message: format!("unknown tag {} (K={num_tags})", r.mark) })
            }
            RecordKind::Answer if r.mark >= rows.len() => {
                return Err(Error::Parse { line: *line, message: format!("parent row {} does not exist", r.mark) })
            }
            _ => {}
        }
    }
    let unsorted = rows.windows(2).any(|w| w[1].1.time < w[0].1.time);
    if unsorted {
        if !options.sort_unsorted {
            let bad = rows.windows(2).find(|w| w[1].1.time < w[0].1.time).map(|w| w[1].0).unwrap_or(0);
            return Err(Error::Parse { line: bad, message: "records are not sorted by time".into() });
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a].1.time.total_cmp(&rows[b].1.time));
        let mut new_pos = vec![0; rows.len()];
        for (new, &old) in order.iter().enumerate() {
            new_pos[old] = new;
        }
        let mut sorted: Vec<(usize, EventLogRecord)> = order.iter().map(|&i| rows[i].clone()).collect();
        for (_, r) in sorted.iter_mut() {
            if r.kind == RecordKind::Answer {
                r.mark = new_pos[r.mark];
            }
        }
        log::warn!("sorted {} out-of-order records by time", rows.len());
        rows = sorted;
    }
    for (line, r) in &rows {
        if r.kind == RecordKind::Answer {
            let (pline, parent) = &rows[r.mark];
            if parent.kind != RecordKind::Question {
                return Err(Error::Parse { line: *line, message: format!("parent row {} (line {pline}) is an answer", r.mark) });
            }
            if !(parent.time < r.time) {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("parent row {} (line {pline}) is not strictly earlier", r.mark),
                });
            }
        }
    }
    let events = rows
        .into_iter()
        .map(|(_, r)| {
            let mut e = match r.kind {
                RecordKind::Question => Event::question(r.time, r.user, r.mark),
                RecordKind::Answer => Event::answer(r.time, r.user, r.mark),
            };
            e.counts_toward_badge = r.badge.unwrap_or(true);
            e
        })
        .collect();
    Dataset::new(events, horizon, num_users, num_tags)
}

/// Read a native log: a header line, then one record per line. Blank lines are ignored.
pub fn read_events<R: Read>(input: R, options: LoadOptions) -> Result<(Dataset, LogHeader)> {
    let mut lines = BufReader::new(input).lines().enumerate();
    let header: LogHeader = loop {
        match lines.next() {
            None => return Err(Error::Parse { line: 1, message: "missing header line".into() }),
            Some((i, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value =
                    serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
                check_version(&value)?;
                break serde_json::from_value(value).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            }
        }
    };
    if !(header.horizon > 0.0 && header.horizon.is_finite()) || header.num_users == 0 || header.num_tags == 0 {
        return Err(Error::InvalidDataset("header needs a positive horizon, num_users and num_tags".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EventLogRecord = serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        rows.push((i + 1, r));
    }
    let d = assemble(rows, header.horizon, header.num_users, header.num_tags, options)?;
    Ok((d, header))
}

pub(crate) fn check_version(value: &serde_json::Value) -> Result<()> {
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(FORMAT_VERSION) => Ok(()),
        Some(found) => Err(Error::UnsupportedVersion { found, expected: FORMAT_VERSION }),
        None => Err(Error::Schema { path: "format_version".into(), message: "missing or not an integer".into() }),
    }
}

pub fn load_events(path: &Path, options: LoadOptions) -> Result<(Dataset, LogHeader)> {
    read_events(super::open(path)?, options)
}

/// Column layout of a CSV export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvMapping {
    pub time: String,
    pub user: String,
    pub kind: String,
    /// Tag id for questions, parent post id for answers.
    pub mark: String,
    /// Post id column; when present, answer marks refer to these ids instead of row numbers.
    #[serde(default)]
    pub id: Option<String>,
    /// Optional boolean column; missing means every event counts toward badges.
    #[serde(default)]
    pub counts_toward_badge: Option<String>,
    /// Raw time values are divided by this (86400 turns epoch seconds into days).
    #[serde(default = "one")]
    pub time_divisor: f64,
    /// Raw time subtracted before dividing; defaults to the earliest time in the file.
    #[serde(default)]
    pub time_origin: Option<f64>,
    pub num_users: usize,
    pub num_tags: usize,
    /// Observation end in model units; defaults to the last event time.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub sort_unsorted: bool,
}

fn one() -> f64 {
    1.0
}

fn parse_kind(s: &str) -> Option<RecordKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "q" | "question" | "1" => Some(RecordKind::Question),
        "a" | "answer" | "2" => Some(RecordKind::Answer),
        _ => None,
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "t" => Some(true),
        "false" | "0" | "no" | "f" => Some(false),
        _ => None,
    }
}

/// Ingest a CSV export with a header row according to `mapping`.
pub fn read_csv_events<R: Read>(input: R, mapping: &CsvMapping) -> Result<Dataset> {
    if !(mapping.time_divisor > 0.0 && mapping.time_divisor.is_finite()) {
        return Err(Error::InvalidArgument("time_divisor must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema { path: name.to_string(), message: "column not found in CSV header".into() })
    };
    let (c_time, c_user, c_kind, c_mark) = (col(&mapping.time)?, col(&mapping.user)?, col(&mapping.kind)?, col(&mapping.mark)?);
    let c_id = mapping.id.as_deref().map(col).transpose()?;
    let c_badge = mapping.counts_toward_badge.as_deref().map(col).transpose()?;

    struct Raw {
        line: usize,
        time: f64,
        user: usize,
        kind: RecordKind,
        mark: String,
        id: Option<String>,
        badge: Option<bool>,
    }
    let mut raw = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let bad = |what: &str, v: &str| Error::Parse { line, message: format!("bad {what} {v:?}") };
        let time: f64 = field(c_time).parse().map_err(|_| bad("time", field(c_time)))?;
        let user: usize = field(c_user).parse().map_err(|_| bad("user", field(c_user)))?;
        let kind = parse_kind(field(c_kind)).ok_or_else(|| bad("kind", field(c_kind)))?;
        let badge = match c_badge {
            Some(c) if !field(c).is_empty() => Some(parse_bool(field(c)).ok_or_else(|| bad("badge flag", field(c)))?),
            _ => None,
        };
        raw.push(Raw { line, time, user, kind, mark: field(c_mark).to_string(), id: c_id.map(|c| field(c).to_string()), badge });
    }
    let origin = mapping.time_origin.unwrap_or_else(|| raw.iter().map(|r| r.time).fold(f64::INFINITY, f64::min));
    let origin = if origin.is_finite() { origin } else { 0.0 };
    let ids: std::collections::HashMap<String, usize> = match c_id {
        Some(_) => raw.iter().enumerate().filter_map(|(row, r)| r.id.clone().map(|id| (id, row))).collect(),
        None => Default::default(),
    };
    let mut rows = Vec::with_capacity(raw.len());
    for r in &raw {
        let mark = match (r.kind, c_id) {
            (RecordKind::Answer, Some(_)) => *ids
                .get(&r.mark)
                .ok_or_else(|| Error::Parse { line: r.line, message: format!("parent id {:?} not found", r.mark) })?,
            _ => r.mark.parse().map_err(|_| Error::Parse { line: r.line, message: format!("bad mark {:?}", r.mark) })?,
        };
        let time = (r.time - origin) / mapping.time_divisor;
        rows.push((r.line, EventLogRecord { time, user: r.user, kind: r.kind, mark, badge: r.badge }));
    }
    let horizon = mapping
        .horizon
        .unwrap_or_else(|| rows.iter().map(|(_, r)| r.time).fold(0.0, f64::max))
        .max(f64::MIN_POSITIVE);
    assemble(rows, horizon, mapping.num_users, mapping.num_tags, LoadOptions { sort_unsorted: mapping.sort_unsorted })
}

pub fn load_csv_events(path: &Path, mapping: &CsvMapping) -> Result<Dataset> {
    read_csv_events(super::open(path)?, mapping)
}

pub fn to_action(kind: RecordKind) -> Action {
    match kind {
        RecordKind::Question => Action::Question,
        RecordKind::Answer => Action::Answer,
    }
}
