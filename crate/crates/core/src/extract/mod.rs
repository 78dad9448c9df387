//! Extraction backends: relevance judgement, structured unit extraction and
//! sentiment scoring behind one interface.
//!
//! Three interchangeable implementations exist:
//!
//! * [`RuleBasedBackend`]: keyword string search plus a polarity lexicon.
//! * [`LlmBackend`]: a chat-completion model (zero-shot, few-shot or fine-tuned).
//! * [`PredictionFileBackend`]: replays precomputed results from JSON-lines.
//!
//! Every backend is deterministic for a fixed configuration. The LLM backend
//! only approaches that at temperature 0.

mod llm;
mod prompt;
mod response;
mod rule;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_unit, Entry, EvaluationUnit, Taxonomy};

pub use llm::{call_llm, LlmBackend, LlmClient, LlmClientConfig, LlmError, LlmMode, LlmReply, TaskMode};
pub use prompt::{build_prompt, Exemplar, Prompt, PromptTask, UnitDraft};
pub use response::{extract_json_object, parse_llm_response, render_response, ParseMode};
pub use rule::{rule_based_extract, LexiconError, RuleBasedBackend, SentimentLexicon, SentimentThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    ZeroShot,
    FewShot,
    FineTuned,
    RuleBased,
    PredictionFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub mode: BackendMode,
}

/// Output of one backend on one entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub entry_id: String,
    pub relevant: bool,
    #[serde(default)]
    pub units: Vec<EvaluationUnit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl ExtractionResult {
    pub fn irrelevant(entry_id: impl Into<String>) -> Self {
        Self { entry_id: entry_id.into(), relevant: false, units: Vec::new(), diagnostics: Vec::new() }
    }

    /// Copies `entry_id` into every unit.
    pub fn stamp_units(&mut self) {
        for unit in &mut self.units {
            unit.entry_id.clone_from(&self.entry_id);
        }
    }

    /// Checks the result invariants; returns a description of the first problem.
    pub fn check(&self, taxonomy: &Taxonomy) -> Result<(), String> {
        if !self.relevant && !self.units.is_empty() {
            return Err(format!("{} units on an irrelevant result", self.units.len()));
        }
        for unit in &self.units {
            if unit.entry_id != self.entry_id {
                return Err(format!("unit belongs to `{}`", unit.entry_id));
            }
            if let Some(v) = validate_unit(unit, taxonomy).first() {
                return Err(format!("unit on {}: {v}", unit.indicator_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("backend unavailable after {attempts} attempt(s): {detail}")]
    BackendUnavailable { attempts: u32, detail: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("malformed response ({reason}): `{fragment}`")]
    MalformedResponse { reason: String, fragment: String },
    #[error("no prediction for entry `{0}`")]
    MissingPrediction(String),
    #[error("backend output for `{entry_id}` violates invariants: {detail}")]
    InvalidOutput { entry_id: String, detail: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

/// A source of [`ExtractionResult`]s. Implementations are shareable across threads.
pub trait ExtractionBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    fn extract(&self, entry: &Entry, taxonomy: &Taxonomy) -> Result<ExtractionResult, ExtractError>;

    /// Extracts a batch; output order follows `entries`.
    fn extract_batch(&self, entries: &[Entry], taxonomy: &Taxonomy) -> Vec<Result<ExtractionResult, ExtractError>> {
        entries.par_iter().map(|e| extract(self, e, taxonomy)).collect()
    }
}

/// Runs `backend` on `entry` and enforces the result invariants.
pub fn extract<B: ExtractionBackend + ?Sized>(
    backend: &B,
    entry: &Entry,
    taxonomy: &Taxonomy,
) -> Result<ExtractionResult, ExtractError> {
    let mut result = backend.extract(entry, taxonomy)?;
    if result.entry_id != entry.id {
        return Err(ExtractError::InvalidOutput {
            entry_id: entry.id.clone(),
            detail: format!("result is for `{}`", result.entry_id),
        });
    }
    result.stamp_units();
    result
        .check(taxonomy)
        .map_err(|detail| ExtractError::InvalidOutput { entry_id: entry.id.clone(), detail })?;
    Ok(result)
}

#[derive(Debug, Error)]
pub enum PredictionFileError {
    #[error("cannot read prediction file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: duplicate prediction for `{entry_id}`")]
    Duplicate { line: usize, entry_id: String },
}

/// Replays precomputed results (one [`ExtractionResult`] per JSON line).
///
/// This is how externally trained models (e.g. a BERT classifier) enter the
/// comparison harness.
#[derive(Debug, Clone)]
pub struct PredictionFileBackend {
    name: String,
    predictions: HashMap<String, ExtractionResult>,
}

impl PredictionFileBackend {
    pub fn new(name: impl Into<String>, results: impl IntoIterator<Item = ExtractionResult>) -> Self {
        let predictions = results
            .into_iter()
            .map(|mut r| {
                r.stamp_units();
                (r.entry_id.clone(), r)
            })
            .collect();
        Self { name: name.into(), predictions }
    }

    pub fn from_jsonl(name: impl Into<String>, text: &str) -> Result<Self, PredictionFileError> {
        let mut seen = HashMap::new();
        for (ix, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let result: ExtractionResult =
                serde_json::from_str(line).map_err(|source| PredictionFileError::Parse { line: ix + 1, source })?;
            if seen.contains_key(&result.entry_id) {
                return Err(PredictionFileError::Duplicate { line: ix + 1, entry_id: result.entry_id });
            }
            seen.insert(result.entry_id.clone(), result);
        }
        Ok(Self::new(name, seen.into_values()))
    }

    pub fn load(name: impl Into<String>, path: impl AsRef<Path>) -> Result<Self, PredictionFileError> {
        Self::from_jsonl(name, &std::fs::read_to_string(path)?)
    }

    pub fn covers(&self, entry_id: &str) -> bool {
        self.predictions.contains_key(entry_id)
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

impl ExtractionBackend for PredictionFileBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor { name: self.name.clone(), mode: BackendMode::PredictionFile }
    }

    fn extract(&self, entry: &Entry, _taxonomy: &Taxonomy) -> Result<ExtractionResult, ExtractError> {
        self.predictions.get(&entry.id).cloned().ok_or_else(|| ExtractError::MissingPrediction(entry.id.clone()))
    }
}

/// Serializes results as JSON-lines, one per entry, in the given order.
pub fn results_to_jsonl(results: &[ExtractionResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("result serializes"));
        out.push('\n');
    }
    out
}
