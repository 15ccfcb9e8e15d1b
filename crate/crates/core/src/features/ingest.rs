//! Event-log readers: CSV with a header, or JSON lines.
//!
//! Records missing fields or carrying an unknown kind are counted and
//! skipped; a present-but-unparseable timestamp aborts with the offending
//! line number, since it usually means the whole file has the wrong format.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::Deserialize;

use crate::error::{Error, Result};

use super::{ClickEvent, EventKind};

/// Tally of an ingestion run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct IngestSummary {
    pub lines_read: usize,
    pub events_parsed: usize,
    pub records_skipped: usize,
}

/// Reads a `.csv` or `.jsonl`/`.ndjson` event log, dispatching on extension.
pub fn read_events(path: &Path) -> Result<(Vec<ClickEvent>, IngestSummary)> {
    let file = File::open(path).map_err(|e| {
        Error::InvalidInput(format!("cannot open events file {}: {e}", path.display()))
    })?;
    let name = path.display().to_string();
    match path.extension().and_then(|s| s.to_str()) {
        Some("csv") => read_events_from(file, &name, EventFormat::Csv),
        Some("jsonl") | Some("ndjson") | Some("json") => {
            read_events_from(file, &name, EventFormat::JsonLines)
        }
        other => Err(Error::InvalidInput(format!(
            "unsupported events extension {other:?} for {name}; use .csv or .jsonl"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    JsonLines,
}

/// Reads events from any reader; `source` names the input in errors.
pub fn read_events_from(
    reader: impl Read,
    source: &str,
    format: EventFormat,
) -> Result<(Vec<ClickEvent>, IngestSummary)> {
    match format {
        EventFormat::Csv => read_csv(reader, source),
        EventFormat::JsonLines => read_jsonl(reader, source),
    }
}

fn read_csv(reader: impl Read, source: &str) -> Result<(Vec<ClickEvent>, IngestSummary)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ts), Some(cust), Some(prod), Some(cat), Some(kind)) = (
        col("timestamp"),
        col("customer_id"),
        col("product_id"),
        col("category_id"),
        col("kind"),
    ) else {
        return Err(Error::InvalidInput(format!(
            "{source}: header must name timestamp, customer_id, product_id, category_id, kind"
        )));
    };

    let mut events = Vec::new();
    let mut summary = IngestSummary::default();
    for (line0, record) in rdr.records().enumerate() {
        let line = line0 + 2; // header is line 1
        summary.lines_read += 1;
        let record = record?;
        let fields = [
            record.get(ts),
            record.get(cust),
            record.get(prod),
            record.get(cat),
            record.get(kind),
        ];
        let [Some(ts_raw), Some(customer), Some(product), Some(category), Some(kind_raw)] = fields
        else {
            summary.records_skipped += 1;
            continue;
        };
        match build_event(ts_raw, customer, product, category, kind_raw, source, line)? {
            Some(event) => {
                events.push(event);
                summary.events_parsed += 1;
            }
            None => summary.records_skipped += 1,
        }
    }
    Ok((events, summary))
}

#[derive(Deserialize)]
struct RawJsonEvent {
    timestamp: serde_json::Value,
    customer_id: String,
    product_id: String,
    category_id: String,
    kind: String,
}

fn read_jsonl(reader: impl Read, source: &str) -> Result<(Vec<ClickEvent>, IngestSummary)> {
    let mut events = Vec::new();
    let mut summary = IngestSummary::default();
    for (line0, text) in BufReader::new(reader).lines().enumerate() {
        let line = line0 + 1;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        summary.lines_read += 1;
        let raw: RawJsonEvent = match serde_json::from_str(&text) {
            Ok(raw) => raw,
            Err(_) => {
                summary.records_skipped += 1;
                continue;
            }
        };
        let ts_raw = match &raw.timestamp {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            _ => {
                return Err(Error::BadRecord {
                    path: source.to_string(),
                    line,
                    message: "timestamp must be a string or a number".into(),
                })
            }
        };
        match build_event(
            &ts_raw,
            &raw.customer_id,
            &raw.product_id,
            &raw.category_id,
            &raw.kind,
            source,
            line,
        )? {
            Some(event) => {
                events.push(event);
                summary.events_parsed += 1;
            }
            None => summary.records_skipped += 1,
        }
    }
    Ok((events, summary))
}

/// `Ok(None)` means a skippable malformed record; timestamp failures abort.
#[allow(clippy::too_many_arguments)]
fn build_event(
    ts_raw: &str,
    customer: &str,
    product: &str,
    category: &str,
    kind_raw: &str,
    source: &str,
    line: usize,
) -> Result<Option<ClickEvent>> {
    let kind = match kind_raw.to_ascii_lowercase().as_str() {
        "view" | "pv" => EventKind::View,
        "purchase" => EventKind::Purchase,
        _ => return Ok(None),
    };
    if customer.is_empty() || product.is_empty() || category.is_empty() {
        return Ok(None);
    }
    let timestamp = parse_timestamp(ts_raw).ok_or_else(|| Error::BadRecord {
        path: source.to_string(),
        line,
        message: format!("unparseable timestamp {ts_raw:?}"),
    })?;
    Ok(Some(ClickEvent {
        timestamp,
        customer_id: customer.to_string(),
        product_id: product.to_string(),
        category_id: category.to_string(),
        kind,
    }))
}

/// Accepts RFC 3339, a bare `YYYY-MM-DDTHH:MM:SS` (taken as UTC) or integer
/// epoch seconds.
fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(t.and_utc());
        }
    }
    if let Ok(secs) = raw.parse::<i64>() {
        return DateTime::from_timestamp(secs, 0);
    }
    None
}
