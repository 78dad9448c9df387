//! Parsing model output into [`ExtractionResult`]s.
//!
//! The expected shape is
//! `{"relevant": bool, "units": [{"object", "content", "indicator", "sentiment"}]}`.
//! Surrounding prose and code fences are tolerated: the first balanced JSON
//! object in the text is used.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ExtractError, ExtractionResult, UnitDraft};
use crate::model::{EvaluationUnit, IndicatorId, SentimentScore, Taxonomy};

/// How to treat a single bad unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// Any bad unit makes the whole response malformed.
    #[default]
    Strict,
    /// Bad units are dropped with a diagnostic.
    Lenient,
}

const FRAGMENT_LIMIT: usize = 200;

fn fragment(text: &str) -> String {
    let mut out: String = text.chars().take(FRAGMENT_LIMIT).collect();
    if text.chars().count() > FRAGMENT_LIMIT {
        out.push('…');
    }
    out
}

fn malformed(reason: impl Into<String>, text: &str) -> ExtractError {
    ExtractError::MalformedResponse { reason: reason.into(), fragment: fragment(text) }
}

/// End (exclusive byte offset) of the balanced `{...}` starting at `start`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (off, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + off + c.len_utf8());
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops commas that directly precede `}` or `]` outside strings.
fn strip_trailing_commas(json: &str) -> String {
    let mut out = String::with_capacity(json.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = json.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|n| !n.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Finds the first balanced JSON object in `text` that parses, repairing
/// trailing commas if needed. Returns the object and its source slice.
pub fn extract_json_object(text: &str) -> Option<(Map<String, Value>, &str)> {
    for (start, _) in text.match_indices('{') {
        let Some(end) = balanced_end(text, start) else { continue };
        let candidate = &text[start..end];
        let parsed = serde_json::from_str::<Value>(candidate)
            .or_else(|_| serde_json::from_str::<Value>(&strip_trailing_commas(candidate)));
        if let Ok(Value::Object(map)) = parsed {
            return Some((map, candidate));
        }
    }
    None
}

fn parse_sentiment(value: &Value) -> Option<SentimentScore> {
    let n = match value {
        Value::Number(n) => match n.as_i64() {
            Some(i) => i,
            None => {
                let f = n.as_f64()?;
                if f.fract() != 0.0 {
                    return None;
                }
                f as i64
            }
        },
        Value::String(s) => s.trim().trim_start_matches('+').parse().ok()?,
        _ => return None,
    };
    SentimentScore::new(n).ok()
}

fn parse_indicator(value: &Value, taxonomy: &Taxonomy) -> Result<IndicatorId, String> {
    let Value::String(s) = value else {
        return Err(format!("indicator must be a string, got {value}"));
    };
    let id: IndicatorId = s.trim().parse().map_err(|e| format!("{e}"))?;
    if !taxonomy.contains(id) {
        return Err(format!("unknown indicator {id}"));
    }
    Ok(id)
}

fn text_field(obj: &Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(other) => Err(format!("`{key}` must be a non-empty string, got {other}")),
        None => Err(format!("missing `{key}`")),
    }
}

fn parse_draft(value: &Value, taxonomy: &Taxonomy) -> Result<UnitDraft, String> {
    let Value::Object(obj) = value else {
        return Err(format!("unit must be an object, got {value}"));
    };
    let indicator = parse_indicator(obj.get("indicator").unwrap_or(&Value::Null), taxonomy)?;
    Ok(UnitDraft { object: text_field(obj, "object")?, content: text_field(obj, "content")?, indicator })
}

fn parse_unit(value: &Value, taxonomy: &Taxonomy, entry_id: &str) -> Result<EvaluationUnit, String> {
    let draft = parse_draft(value, taxonomy)?;
    let raw = value.get("sentiment").ok_or_else(|| "missing `sentiment`".to_string())?;
    let sentiment = parse_sentiment(raw).ok_or_else(|| format!("sentiment {raw} is not an integer in [-2, 2]"))?;
    Ok(EvaluationUnit {
        entry_id: entry_id.to_string(),
        object_text: draft.object,
        content_text: draft.content,
        indicator_id: draft.indicator,
        sentiment,
    })
}

/// Collects the elements of `units` through `parse`, honouring `mode`.
fn parse_units<T>(
    obj: &Map<String, Value>,
    source: &str,
    mode: ParseMode,
    diagnostics: &mut Vec<String>,
    mut parse: impl FnMut(&Value) -> Result<T, String>,
) -> Result<Option<Vec<T>>, ExtractError> {
    let items = match obj.get("units") {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Array(items)) => items,
        Some(_) => return Err(malformed("`units` is not a list", source)),
    };
    let mut out = Vec::with_capacity(items.len());
    for (k, item) in items.iter().enumerate() {
        match parse(item) {
            Ok(u) => out.push(u),
            Err(reason) => match mode {
                ParseMode::Strict => return Err(malformed(format!("unit {k}: {reason}"), &item.to_string())),
                ParseMode::Lenient => diagnostics.push(format!("dropped unit {k}: {reason}: {}", fragment(&item.to_string()))),
            },
        }
    }
    Ok(Some(out))
}

fn relevance_flag(obj: &Map<String, Value>, source: &str) -> Result<Option<bool>, ExtractError> {
    match obj.get("relevant") {
        None => Ok(None),
        Some(Value::Bool(b)) => Ok(Some(*b)),
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => Ok(Some(true)),
        Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => Ok(Some(false)),
        Some(other) => Err(malformed(format!("`relevant` is not a boolean: {other}"), source)),
    }
}

/// Reconciles the relevance flag with the parsed units.
fn settle_relevance<T>(
    flag: Option<bool>,
    units: Option<Vec<T>>,
    source: &str,
    mode: ParseMode,
    diagnostics: &mut Vec<String>,
) -> Result<(bool, Vec<T>), ExtractError> {
    let strict = mode == ParseMode::Strict;
    match (flag, units) {
        (None, _) if strict => Err(malformed("missing `relevant`", source)),
        (None, units) => {
            let units = units.unwrap_or_default();
            diagnostics.push("missing `relevant`; inferred from units".into());
            Ok((!units.is_empty(), units))
        }
        (Some(true), None) if strict => Err(malformed("missing `units`", source)),
        (Some(true), units) => Ok((true, units.unwrap_or_default())),
        (Some(false), Some(units)) if !units.is_empty() => {
            if strict {
                return Err(malformed("units present on an irrelevant response", source));
            }
            diagnostics.push(format!("dropped {} unit(s) on an irrelevant response", units.len()));
            Ok((false, Vec::new()))
        }
        (Some(false), _) => Ok((false, Vec::new())),
    }
}

fn object_or_malformed(text: &str) -> Result<(Map<String, Value>, &str), ExtractError> {
    extract_json_object(text).ok_or_else(|| malformed("no JSON object found", text))
}

/// Parses a combined-task response for `entry_id`.
pub fn parse_llm_response(
    entry_id: &str,
    text: &str,
    taxonomy: &Taxonomy,
    mode: ParseMode,
) -> Result<ExtractionResult, ExtractError> {
    let (obj, source) = object_or_malformed(text)?;
    let mut diagnostics = Vec::new();
    let flag = relevance_flag(&obj, source)?;
    let units = parse_units(&obj, source, mode, &mut diagnostics, |v| parse_unit(v, taxonomy, entry_id))?;
    let (relevant, units) = settle_relevance(flag, units, source, mode, &mut diagnostics)?;
    Ok(ExtractionResult { entry_id: entry_id.to_string(), relevant, units, diagnostics })
}

/// Relevance-task response: `{"relevant": bool}`.
pub(crate) fn parse_relevance(text: &str) -> Result<bool, ExtractError> {
    let (obj, source) = object_or_malformed(text)?;
    relevance_flag(&obj, source)?.ok_or_else(|| malformed("missing `relevant`", source))
}

/// Extraction-task response: units without sentiment.
pub(crate) fn parse_drafts(
    text: &str,
    taxonomy: &Taxonomy,
    mode: ParseMode,
    diagnostics: &mut Vec<String>,
) -> Result<(bool, Vec<UnitDraft>), ExtractError> {
    let (obj, source) = object_or_malformed(text)?;
    let flag = relevance_flag(&obj, source)?;
    let units = parse_units(&obj, source, mode, diagnostics, |v| parse_draft(v, taxonomy))?;
    settle_relevance(flag, units, source, mode, diagnostics)
}

/// Sentiment-task response: `{"sentiments": [int, ...]}`, one per draft.
pub(crate) fn parse_sentiments(text: &str, expected: usize) -> Result<Vec<SentimentScore>, ExtractError> {
    let (obj, source) = object_or_malformed(text)?;
    let Some(Value::Array(items)) = obj.get("sentiments") else {
        return Err(malformed("missing `sentiments` list", source));
    };
    if items.len() != expected {
        return Err(malformed(format!("expected {expected} sentiments, got {}", items.len()), source));
    }
    items
        .iter()
        .map(|v| parse_sentiment(v).ok_or_else(|| malformed(format!("sentiment {v} is not an integer in [-2, 2]"), source)))
        .collect()
}

/// Renders a result in the wire shape accepted by [`parse_llm_response`].
pub fn render_response(result: &ExtractionResult) -> String {
    serde_json::json!({
        "relevant": result.relevant,
        "units": result.units.iter().map(|u| serde_json::json!({
            "object": u.object_text,
            "content": u.content_text,
            "indicator": u.indicator_id.to_string(),
            "sentiment": u.sentiment.value(),
        })).collect::<Vec<_>>(),
    })
    .to_string()
}
