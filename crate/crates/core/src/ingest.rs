//! Platform export parsing, text cleaning, deduplication and date filtering.
//!
//! Each platform has a documented column set (see [`PlatformFormat`]). Exports
//! are CSV with a header row, or JSON-lines objects using the same field names.
//! Malformed rows never disappear silently: they come back as [`Reject`]s.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveDateTime, TimeZone, Utc};
use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{valid_coordinate, Entry, GeoHint, Platform, PlatformKind};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: unrecognized {platform} export, missing column(s) {missing:?}")]
    UnknownFormat { path: String, platform: PlatformKind, missing: Vec<String> },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("invalid cleaning config: {0}")]
    InvalidConfig(String),
    #[error("invalid date range: start {start} is after end {end}")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
}

/// Column names and timestamp conventions for one platform's export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatformFormat {
    pub kind: PlatformKind,
    pub id_field: &'static str,
    pub time_field: &'static str,
    pub text_field: &'static str,
    pub name_field: &'static str,
    pub lat_field: &'static str,
    pub lon_field: &'static str,
    /// Offset applied to timestamps that carry no zone of their own.
    pub utc_offset_seconds: i32,
}

const BEIJING_OFFSET: i32 = 8 * 3600;

impl PlatformFormat {
    pub fn for_kind(kind: PlatformKind) -> Self {
        let (id_field, time_field, text_field, name_field) = match kind {
            PlatformKind::ReviewSite => ("review_id", "created_at", "content", "community"),
            PlatformKind::Microblog => ("mid", "created_at", "text", "location"),
            PlatformKind::GovBoard => ("message_id", "submitted_at", "body", "community"),
        };
        Self {
            kind,
            id_field,
            time_field,
            text_field,
            name_field,
            lat_field: "lat",
            lon_field: "lon",
            utc_offset_seconds: BEIJING_OFFSET,
        }
    }

    pub fn required_fields(&self) -> [&'static str; 3] {
        [self.id_field, self.time_field, self.text_field]
    }

    fn offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset_seconds).expect("offset within a day")
    }

    /// Parses a platform timestamp into UTC.
    ///
    /// RFC 3339 values keep their own offset; naive `YYYY-MM-DD HH:MM[:SS]`
    /// (dash or slash separated) and bare dates use the platform offset.
    pub fn parse_timestamp(&self, raw: &str) -> Option<DateTime<Utc>> {
        let raw = raw.trim();
        if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
            return Some(t.with_timezone(&Utc));
        }
        const FORMATS: [&str; 5] =
            ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S", "%Y/%m/%d %H:%M:%S", "%Y/%m/%d %H:%M"];
        let naive = FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
            .or_else(|| NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))?;
        self.offset().from_local_datetime(&naive).single().map(|t| t.with_timezone(&Utc))
    }
}

/// One logical row of a platform export, untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub platform: Platform,
    pub fields: IndexMap<String, String>,
    /// 1-based line number in the source file.
    pub row: usize,
}

impl RawRecord {
    pub fn field(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(String::as_str)
    }
}

/// A row that did not make it into the corpus, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub platform: PlatformKind,
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedRecords {
    pub records: Vec<RawRecord>,
    pub rejects: Vec<Reject>,
}

/// Reads one platform export. `.jsonl`/`.ndjson` files are JSON-lines, anything else CSV.
pub fn parse_records(platform: &Platform, source: impl AsRef<Path>) -> Result<ParsedRecords, IngestError> {
    let source = source.as_ref();
    let path = source.display().to_string();
    let text = std::fs::read_to_string(source).map_err(|e| IngestError::Io { path: path.clone(), source: e })?;
    let is_jsonl = matches!(
        source.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson")
    );
    if is_jsonl {
        Ok(parse_jsonl(platform, &text))
    } else {
        parse_csv(platform, &text, &path)
    }
}

fn parse_csv(platform: &Platform, text: &str, path: &str) -> Result<ParsedRecords, IngestError> {
    let format = PlatformFormat::for_kind(platform.kind);
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Csv { path: path.to_string(), source: e })?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim().to_string())
        .collect();
    if header.iter().all(String::is_empty) {
        // Empty file.
        return Ok(ParsedRecords::default());
    }
    let missing: Vec<String> = format
        .required_fields()
        .iter()
        .filter(|f| !header.iter().any(|h| h == *f))
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::UnknownFormat { path: path.to_string(), platform: platform.kind, missing });
    }

    let mut out = ParsedRecords::default();
    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
                out.rejects.push(Reject { platform: platform.kind, row, reason: format!("unparseable_row: {e}") });
                continue;
            }
        };
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let fields: IndexMap<String, String> =
            header.iter().cloned().zip(record.iter().map(str::to_string)).collect();
        let raw = RawRecord { platform: platform.clone(), fields, row };
        match missing_required(&raw, &format) {
            Some(field) => out.rejects.push(Reject { platform: platform.kind, row, reason: format!("missing_field:{field}") }),
            None => out.records.push(raw),
        }
    }
    Ok(out)
}

fn parse_jsonl(platform: &Platform, text: &str) -> ParsedRecords {
    let format = PlatformFormat::for_kind(platform.kind);
    let mut out = ParsedRecords::default();
    for (ix, line) in text.lines().enumerate() {
        let row = ix + 1;
        if line.trim().is_empty() {
            continue;
        }
        let object = match serde_json::from_str::<serde_json::Value>(line) {
            Ok(serde_json::Value::Object(map)) => map,
            Ok(_) => {
                out.rejects.push(Reject { platform: platform.kind, row, reason: "not_an_object".into() });
                continue;
            }
            Err(e) => {
                out.rejects.push(Reject { platform: platform.kind, row, reason: format!("invalid_json: {e}") });
                continue;
            }
        };
        let fields = object
            .into_iter()
            .filter_map(|(k, v)| match v {
                serde_json::Value::String(s) => Some((k, s)),
                serde_json::Value::Null => None,
                other => Some((k, other.to_string())),
            })
            .collect();
        let raw = RawRecord { platform: platform.clone(), fields, row };
        match missing_required(&raw, &format) {
            Some(field) => out.rejects.push(Reject { platform: platform.kind, row, reason: format!("missing_field:{field}") }),
            None => out.records.push(raw),
        }
    }
    out
}

fn missing_required(raw: &RawRecord, format: &PlatformFormat) -> Option<&'static str> {
    if raw.field(format.text_field).is_none() {
        return Some(format.text_field);
    }
    format
        .required_fields()
        .into_iter()
        .find(|f| raw.field(f).map_or(true, |v| v.trim().is_empty()) && *f != format.text_field)
}

/// Text cleaning rules. Defaults: strip URLs, collapse whitespace, keep emoji, 5..=5000 chars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub strip_urls: bool,
    pub collapse_whitespace: bool,
    pub strip_emoji: bool,
    pub min_length: usize,
    pub max_length: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self { strip_urls: true, collapse_whitespace: true, strip_emoji: false, min_length: 5, max_length: 5000 }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.min_length == 0 || self.min_length > self.max_length {
            return Err(IngestError::InvalidConfig(format!(
                "need 0 < min_length <= max_length, got {}..{}",
                self.min_length, self.max_length
            )));
        }
        Ok(())
    }
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").expect("static regex"))
}

fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF | 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0xFE0E..=0xFE0F | 0x200D | 0x20E3 | 0xE0020..=0xE007F)
}

/// Applies the cleaning rules. Never lengthens the text.
pub fn clean_text(text: &str, config: &CleaningConfig) -> String {
    let mut out = if config.strip_urls { url_regex().replace_all(text, "").into_owned() } else { text.to_string() };
    if config.strip_emoji {
        out.retain(|c| !is_emoji(c));
    }
    if config.collapse_whitespace {
        out = out.split_whitespace().collect::<Vec<_>>().join(" ");
    } else {
        out = out.trim().to_string();
    }
    out
}

/// Turns one raw record into an [`Entry`], or the reason it was rejected.
pub fn normalize(record: &RawRecord, config: &CleaningConfig) -> Result<Entry, Reject> {
    let format = PlatformFormat::for_kind(record.platform.kind);
    let reject = |reason: &str| Reject { platform: record.platform.kind, row: record.row, reason: reason.to_string() };

    let raw_id = record.field(format.id_field).map(str::trim).unwrap_or_default();
    if raw_id.is_empty() {
        return Err(reject("missing_id"));
    }
    let timestamp = record
        .field(format.time_field)
        .and_then(|t| format.parse_timestamp(t))
        .ok_or_else(|| reject("bad_timestamp"))?;

    let text = clean_text(record.field(format.text_field).unwrap_or_default(), config);
    let length = text.chars().count();
    if length < config.min_length {
        return Err(reject("too_short"));
    }
    if length > config.max_length {
        return Err(reject("too_long"));
    }

    let lat = record.field(format.lat_field).map(str::trim).filter(|s| !s.is_empty());
    let lon = record.field(format.lon_field).map(str::trim).filter(|s| !s.is_empty());
    let geo_hint = match (lat, lon) {
        (Some(lat), Some(lon)) => match (lat.parse::<f64>(), lon.parse::<f64>()) {
            (Ok(lat), Ok(lon)) if valid_coordinate(lat, lon) => GeoHint::Coordinate { lat, lon },
            _ => return Err(reject("invalid_coordinate")),
        },
        (Some(_), None) | (None, Some(_)) => return Err(reject("invalid_coordinate")),
        (None, None) => match record.field(format.name_field).map(str::trim).filter(|s| !s.is_empty()) {
            Some(name) => GeoHint::CommunityName { name: name.to_string() },
            None => GeoHint::None,
        },
    };

    Ok(Entry {
        id: format!("{}:{}", record.platform.kind, raw_id),
        platform: record.platform.clone(),
        timestamp,
        text,
        geo_hint,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalizedBatch {
    /// Sorted by id.
    pub entries: Vec<Entry>,
    pub rejects: Vec<Reject>,
}

/// Normalizes a batch. Later rows that reuse an earlier row's id are rejected
/// as `duplicate_id`. `entries.len() + rejects.len() == records.len()`.
pub fn normalize_batch(records: &[RawRecord], config: &CleaningConfig) -> NormalizedBatch {
    use rayon::prelude::*;

    let results: Vec<Result<Entry, Reject>> = records.par_iter().map(|r| normalize(r, config)).collect();
    let mut seen = HashSet::new();
    let mut batch = NormalizedBatch::default();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(entry) if !seen.insert(entry.id.clone()) => batch.rejects.push(Reject {
                platform: record.platform.kind,
                row: record.row,
                reason: "duplicate_id".into(),
            }),
            Ok(entry) => batch.entries.push(entry),
            Err(reject) => batch.rejects.push(reject),
        }
    }
    batch.entries.sort_by(|a, b| a.id.cmp(&b.id));
    batch
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DedupOutcome {
    /// Sorted by id.
    pub kept: Vec<Entry>,
    pub dropped_count: usize,
}

/// Drops entries repeating an earlier (platform, cleaned text) pair.
///
/// "Earlier" means smallest (timestamp, id). Identical text on different
/// platforms is kept.
pub fn dedup(entries: Vec<Entry>) -> DedupOutcome {
    let mut ordered = entries;
    ordered.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    let mut first_seen: HashMap<(PlatformKind, String), ()> = HashMap::new();
    let mut kept = Vec::with_capacity(ordered.len());
    let mut dropped_count = 0;
    for entry in ordered {
        let key = (entry.platform.kind, entry.text.clone());
        if first_seen.insert(key, ()).is_some() {
            dropped_count += 1;
        } else {
            kept.push(entry);
        }
    }
    kept.sort_by(|a, b| a.id.cmp(&b.id));
    DedupOutcome { kept, dropped_count }
}

/// Keeps entries whose UTC date lies in `[start, end]`.
pub fn filter_by_date(entries: Vec<Entry>, start: NaiveDate, end: NaiveDate) -> Result<Vec<Entry>, IngestError> {
    if start > end {
        return Err(IngestError::InvalidRange { start, end });
    }
    Ok(entries
        .into_iter()
        .filter(|e| {
            let d = e.timestamp.date_naive();
            start <= d && d <= end
        })
        .collect())
}

/// Per-stage counts for the ingest summary artifact.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub raw_records: BTreeMap<PlatformKind, usize>,
    pub rejected: usize,
    pub duplicates_dropped: usize,
    pub outside_date_range: usize,
    pub entries: usize,
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn record(kind: PlatformKind, pairs: &[(&str, &str)]) -> RawRecord {
        RawRecord {
            platform: kind.into(),
            fields: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            row: 2,
        }
    }

    fn review(id: &str, text: &str) -> RawRecord {
        record(PlatformKind::ReviewSite, &[("review_id", id), ("created_at", "2023-06-01 10:00"), ("content", text)])
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parses_three_row_review_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "r.csv",
            "review_id,created_at,content,community\n1,2023-01-02 10:00,nice garden,A\n2,2023-01-03 11:00,\"noisy, dirty\",B\n3,2023-01-04 12:00,ok,\n",
        );
        let parsed = parse_records(&PlatformKind::ReviewSite.into(), &path).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert!(parsed.rejects.is_empty());
        assert_eq!(parsed.records[1].field("content"), Some("noisy, dirty"));
        assert_eq!(parsed.records[0].row, 2);
    }

    #[test]
    fn short_row_becomes_reject_with_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "g.csv",
            "message_id,submitted_at,body\n1,2023-01-02 10:00,parking is full\n2,2023-01-03 11:00\n3,2023-01-04,lights broken\n",
        );
        let parsed = parse_records(&PlatformKind::GovBoard.into(), &path).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.rejects, vec![Reject { platform: PlatformKind::GovBoard, row: 3, reason: "missing_field:body".into() }]);
    }

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "m.csv", "mid,created_at,text\n");
        let parsed = parse_records(&PlatformKind::Microblog.into(), &path).unwrap();
        assert_eq!((parsed.records.len(), parsed.rejects.len()), (0, 0));
        let empty = write(&dir, "e.csv", "");
        assert_eq!(parse_records(&PlatformKind::Microblog.into(), &empty).unwrap(), ParsedRecords::default());
    }

    #[test]
    fn wrong_columns_is_unknown_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "m.csv", "review_id,created_at,content\n1,2023-01-01,hello there\n");
        let err = parse_records(&PlatformKind::Microblog.into(), &path).unwrap_err();
        assert!(matches!(err, IngestError::UnknownFormat { ref missing, .. } if missing == &["mid", "text"]));
        assert!(matches!(
            parse_records(&PlatformKind::Microblog.into(), dir.path().join("nope.csv")),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn jsonl_rows_and_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "m.jsonl",
            "{\"mid\":\"a\",\"created_at\":\"2023-05-05 08:00:00\",\"text\":\"bus stop moved\",\"lat\":39.9,\"lon\":116.4}\n\nnot json\n{\"mid\":\"b\",\"created_at\":\"2023-05-05\"}\n",
        );
        let parsed = parse_records(&PlatformKind::Microblog.into(), &path).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].field("lat"), Some("39.9"));
        let rows: Vec<(usize, &str)> = parsed.rejects.iter().map(|r| (r.row, r.reason.as_str())).collect();
        assert_eq!(rows[1], (4, "missing_field:text"));
        assert_eq!(rows[0].0, 3);
    }

    #[test]
    fn collapse_whitespace_example() {
        let entry = normalize(&review("1", "great park!!  \n\n"), &CleaningConfig::default()).unwrap();
        assert_eq!(entry.text, "great park!!");
        assert_eq!(entry.id, "review_site:1");
    }

    #[test]
    fn url_only_text_is_too_short() {
        let config = CleaningConfig { min_length: 2, ..CleaningConfig::default() };
        let reject = normalize(&review("1", "http://x.co"), &config).unwrap_err();
        assert_eq!(reject.reason, "too_short");
    }

    #[test]
    fn emoji_and_length_rules() {
        let config = CleaningConfig { strip_emoji: true, max_length: 10, ..CleaningConfig::default() };
        assert_eq!(clean_text("nice 😀 place", &config), "nice place");
        assert_eq!(normalize(&review("1", "this text is far too long"), &config).unwrap_err().reason, "too_long");
        assert!(CleaningConfig { min_length: 0, ..CleaningConfig::default() }.validate().is_err());
        assert!(CleaningConfig { min_length: 9, max_length: 8, ..CleaningConfig::default() }.validate().is_err());
        assert!(CleaningConfig::default().validate().is_ok());
    }

    /// Days since 1970-01-01 for a proleptic Gregorian date.
    fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
        let y = if m <= 2 { y - 1 } else { y };
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + d - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146097 + doe - 719468
    }

    #[test]
    fn local_timestamp_converts_to_utc() {
        let entry = normalize(&review("1", "parking is full"), &CleaningConfig::default()).unwrap();
        // 2023-06-01 10:00 at UTC+8
        let expected = days_from_civil(2023, 6, 1) * 86_400 + 10 * 3600 - 8 * 3600;
        assert_eq!(entry.timestamp.timestamp(), expected);
        assert_eq!(entry.timestamp.to_rfc3339(), "2023-06-01T02:00:00+00:00");

        let f = PlatformFormat::for_kind(PlatformKind::Microblog);
        let zoned = f.parse_timestamp("2023-06-01T10:00:00Z").unwrap();
        assert_eq!(zoned.timestamp(), days_from_civil(2023, 6, 1) * 86_400 + 10 * 3600);
        assert!(f.parse_timestamp("yesterday").is_none());
        assert!(f.parse_timestamp("2023-02-30 10:00").is_none());
    }

    #[test]
    fn geo_hint_rules() {
        let base = [("review_id", "1"), ("created_at", "2023-06-01"), ("content", "some text here")];
        let with = |extra: &[(&'static str, &'static str)]| {
            let mut pairs = base.to_vec();
            pairs.extend_from_slice(extra);
            normalize(&record(PlatformKind::ReviewSite, &pairs), &CleaningConfig::default())
        };
        assert_eq!(with(&[("lat", "39.9"), ("lon", "116.4")]).unwrap().geo_hint, GeoHint::Coordinate { lat: 39.9, lon: 116.4 });
        assert_eq!(with(&[("lat", "95"), ("lon", "116.4")]).unwrap_err().reason, "invalid_coordinate");
        assert_eq!(with(&[("lat", "39.9")]).unwrap_err().reason, "invalid_coordinate");
        assert_eq!(
            with(&[("community", " Sunny Garden ")]).unwrap().geo_hint,
            GeoHint::CommunityName { name: "Sunny Garden".into() }
        );
        assert_eq!(with(&[]).unwrap().geo_hint, GeoHint::None);
    }

    #[test]
    fn batch_conserves_counts_and_rejects_duplicate_ids() {
        let records = vec![review("2", "fine place"), review("1", "x"), review("2", "another text"), review("3", "quiet area")];
        let batch = normalize_batch(&records, &CleaningConfig::default());
        assert_eq!(batch.entries.len() + batch.rejects.len(), records.len());
        let ids: Vec<&str> = batch.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["review_site:2", "review_site:3"]);
        let reasons: Vec<&str> = batch.rejects.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons, ["too_short", "duplicate_id"]);
    }

    fn entry(id: &str, kind: PlatformKind, text: &str, ts: &str) -> Entry {
        Entry {
            id: id.into(),
            platform: kind.into(),
            timestamp: DateTime::parse_from_rfc3339(ts).unwrap().with_timezone(&Utc),
            text: text.into(),
            geo_hint: GeoHint::None,
        }
    }

    #[test]
    fn dedup_examples() {
        let out = dedup(vec![
            entry("b", PlatformKind::Microblog, "same words", "2023-01-01T00:00:00Z"),
            entry("a", PlatformKind::Microblog, "same words", "2023-01-02T00:00:00Z"),
        ]);
        assert_eq!(out.dropped_count, 1);
        // earliest timestamp wins even though its id sorts later
        assert_eq!(out.kept[0].id, "b");

        let out = dedup(vec![
            entry("a", PlatformKind::Microblog, "same words", "2023-01-01T00:00:00Z"),
            entry("b", PlatformKind::GovBoard, "same words", "2023-01-01T00:00:00Z"),
        ]);
        assert_eq!((out.kept.len(), out.dropped_count), (2, 0));
        assert_eq!(dedup(Vec::new()), DedupOutcome::default());
    }

    #[test]
    fn date_filter_is_inclusive() {
        let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2024, 12, 31).unwrap();
        let kept = filter_by_date(
            vec![
                entry("a", PlatformKind::Microblog, "t1", "2023-01-01T00:00:00Z"),
                entry("b", PlatformKind::Microblog, "t2", "2022-12-31T23:59:59Z"),
                entry("c", PlatformKind::Microblog, "t3", "2024-12-31T23:59:59Z"),
                entry("d", PlatformKind::Microblog, "t4", "2025-01-01T00:00:00Z"),
            ],
            start,
            end,
        )
        .unwrap();
        let ids: Vec<&str> = kept.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert!(filter_by_date(Vec::new(), start, end).unwrap().is_empty());
        assert!(matches!(filter_by_date(Vec::new(), end, start), Err(IngestError::InvalidRange { .. })));
    }

    proptest::proptest! {
        #[test]
        fn cleaning_never_lengthens(text in "\\PC{0,60}", urls: bool, emoji: bool, collapse: bool) {
            let config = CleaningConfig { strip_urls: urls, strip_emoji: emoji, collapse_whitespace: collapse, ..CleaningConfig::default() };
            let once = clean_text(&text, &config);
            proptest::prop_assert!(once.chars().count() <= text.chars().count());
            proptest::prop_assert_eq!(&once, &clean_text(&text, &config));
        }

        #[test]
        fn dedup_is_idempotent(texts in proptest::collection::vec((0u8..3, 0u8..4, 0i64..5), 0..30)) {
            let entries: Vec<Entry> = texts.iter().enumerate().map(|(i, (p, t, day))| Entry {
                id: format!("e{i:03}"),
                platform: PlatformKind::ALL[*p as usize].into(),
                timestamp: DateTime::from_timestamp(1_700_000_000 + day * 86_400, 0).unwrap(),
                text: format!("text {t}"),
                geo_hint: GeoHint::None,
            }).collect();
            let n = entries.len();
            let first = dedup(entries);
            proptest::prop_assert_eq!(first.kept.len() + first.dropped_count, n);
            proptest::prop_assert!(first.kept.windows(2).all(|w| w[0].id < w[1].id));
            let second = dedup(first.kept.clone());
            proptest::prop_assert_eq!(second.dropped_count, 0);
            proptest::prop_assert_eq!(second.kept, first.kept);
        }
    }
}
