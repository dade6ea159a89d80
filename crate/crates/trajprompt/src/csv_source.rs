//! Delimiter-separated check-in logs → [`RawCheckIn`]s.
//!
//! Columns are addressed by header name, or by zero-based position written as
//! `#N` (needed for header-less files such as the raw Foursquare dumps).
//! Malformed rows are skipped and reported; a missing required column aborts.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use trajprompt_core::ingest::RawCheckIn;
use trajprompt_core::Timestamp;

use crate::error::{Error, IoContext, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnSchema {
    pub delimiter: char,
    pub has_header: bool,
    pub user: String,
    pub poi: String,
    pub category_id: String,
    pub category_name: String,
    pub latitude: String,
    pub longitude: String,
    pub timestamp: String,
    /// Optional column holding the local UTC offset in minutes.
    pub utc_offset_minutes: Option<String>,
    /// chrono format string; when absent several common layouts are tried.
    pub timestamp_format: Option<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            delimiter: ',',
            has_header: true,
            user: "user_id".into(),
            poi: "poi_id".into(),
            category_id: "category_id".into(),
            category_name: "category_name".into(),
            latitude: "latitude".into(),
            longitude: "longitude".into(),
            timestamp: "timestamp".into(),
            utc_offset_minutes: None,
            timestamp_format: None,
        }
    }
}

impl ColumnSchema {
    /// Layout of the tab-separated Foursquare NYC/TKY check-in dumps.
    pub fn foursquare_tsmc() -> Self {
        ColumnSchema {
            delimiter: '\t',
            has_header: false,
            user: "#0".into(),
            poi: "#1".into(),
            category_id: "#2".into(),
            category_name: "#3".into(),
            latitude: "#4".into(),
            longitude: "#5".into(),
            utc_offset_minutes: Some("#6".into()),
            timestamp: "#7".into(),
            timestamp_format: Some("%a %b %d %H:%M:%S %z %Y".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based data row (header excluded).
    pub row: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseOutcome {
    pub checkins: Vec<RawCheckIn>,
    pub rejected: Vec<RejectedRow>,
}

/// Tries, in order: unix seconds, RFC 3339, the Foursquare layout, and naive
/// `YYYY-MM-DD[ T]HH:MM[:SS]` read as UTC.
pub fn parse_timestamp(s: &str, format: Option<&str>) -> Option<Timestamp> {
    let s = s.trim();
    if let Some(fmt) = format {
        if fmt.contains("%z") || fmt.contains("%:z") || fmt.contains("%#z") {
            return DateTime::parse_from_str(s, fmt).ok().map(|d| Timestamp(d.timestamp()));
        }
        return NaiveDateTime::parse_from_str(s, fmt).ok().map(|d| Timestamp(d.and_utc().timestamp()));
    }
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        return s.parse().ok().map(Timestamp);
    }
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Some(Timestamp(d.timestamp()));
    }
    if let Ok(d) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        return Some(Timestamp(d.timestamp()));
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|d| Timestamp(d.and_utc().timestamp()))
}

struct Columns {
    user: usize,
    poi: usize,
    category_id: usize,
    category_name: usize,
    latitude: usize,
    longitude: usize,
    timestamp: usize,
    offset: Option<usize>,
}

fn resolve(spec: &str, headers: Option<&csv::StringRecord>) -> Result<usize> {
    if let Some(idx) = spec.strip_prefix('#') {
        return idx.parse().map_err(|_| Error::Schema(format!("bad column index {spec:?}")));
    }
    let headers = headers.ok_or_else(|| Error::Schema(format!("column {spec:?} named but the input has no header")))?;
    headers
        .iter()
        .position(|h| h.trim() == spec)
        .ok_or_else(|| Error::Schema(format!("required column {spec:?} not found in header")))
}

fn resolve_all(schema: &ColumnSchema, headers: Option<&csv::StringRecord>) -> Result<Columns> {
    Ok(Columns {
        user: resolve(&schema.user, headers)?,
        poi: resolve(&schema.poi, headers)?,
        category_id: resolve(&schema.category_id, headers)?,
        category_name: resolve(&schema.category_name, headers)?,
        latitude: resolve(&schema.latitude, headers)?,
        longitude: resolve(&schema.longitude, headers)?,
        timestamp: resolve(&schema.timestamp, headers)?,
        offset: schema.utc_offset_minutes.as_deref().map(|c| resolve(c, headers)).transpose()?,
    })
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns, schema: &ColumnSchema, seq: u64) -> Result<RawCheckIn, String> {
    let field = |i: usize, name: &str| rec.get(i).map(str::trim).ok_or_else(|| format!("missing field {name}"));
    let number = |i: usize, name: &str| -> Result<f64, String> {
        let v = field(i, name)?;
        v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("non-numeric {name} {v:?}"))
    };
    let ts_raw = field(cols.timestamp, "timestamp")?;
    let timestamp = parse_timestamp(ts_raw, schema.timestamp_format.as_deref())
        .ok_or_else(|| format!("bad timestamp {ts_raw:?}"))?;
    let utc_offset_minutes = match cols.offset {
        None => 0,
        Some(i) => {
            let v = field(i, "utc offset")?;
            v.parse::<i32>().map_err(|_| format!("bad utc offset {v:?}"))?
        }
    };
    let c = RawCheckIn {
        raw_user_key: field(cols.user, "user")?.into(),
        raw_poi_key: field(cols.poi, "poi")?.into(),
        raw_category_key: field(cols.category_id, "category id")?.into(),
        category_name: field(cols.category_name, "category name")?.into(),
        timestamp,
        utc_offset_minutes,
        latitude: number(cols.latitude, "latitude")?,
        longitude: number(cols.longitude, "longitude")?,
        seq,
    };
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

pub fn parse_checkins<R: Read>(reader: R, schema: &ColumnSchema) -> Result<ParseOutcome> {
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| Error::Schema(format!("delimiter {:?} is not a single byte", schema.delimiter)))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .from_reader(reader);
    let headers = if schema.has_header {
        Some(rdr.headers().map_err(|e| Error::Schema(format!("cannot read header: {e}")))?.clone())
    } else {
        None
    };
    let cols = resolve_all(schema, headers.as_ref())?;

    let mut out = ParseOutcome::default();
    let mut record = csv::StringRecord::new();
    let mut row = 0u64;
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                row += 1;
                match parse_row(&record, &cols, schema, row - 1) {
                    Ok(c) => out.checkins.push(c),
                    Err(reason) => {
                        log::debug!("skipping row {row}: {reason}");
                        out.rejected.push(RejectedRow { row, reason });
                    }
                }
            }
            Err(e) if e.is_io_error() => return Err(Error::Schema(format!("read failure: {e}"))),
            Err(e) => {
                row += 1;
                out.rejected.push(RejectedRow { row, reason: e.to_string() });
            }
        }
    }
    if !out.rejected.is_empty() {
        log::warn!("skipped {} malformed row(s) of {}", out.rejected.len(), row);
    }
    Ok(out)
}

pub fn parse_checkins_path(path: &Path, schema: &ColumnSchema) -> Result<ParseOutcome> {
    let f = File::open(path).at(path)?;
    parse_checkins(std::io::BufReader::new(f), schema)
}
