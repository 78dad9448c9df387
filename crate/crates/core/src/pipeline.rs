//! Stage runner binding the modules into a batch pipeline.
//!
//! Every stage reads its inputs from JSON-lines / JSON artifacts in the
//! output directory and writes its own, so stages can be re-run in
//! isolation. After each stage `manifest.json` records the config hash and
//! the SHA-256 of every artifact present.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::eval::{compare_backends, load_gold, score_outcomes, Comparison};
use crate::extract::{
    Exemplar, ExtractionBackend, ExtractionResult, LlmBackend, LlmClientConfig, PredictionFileBackend, RuleBasedBackend,
    SentimentLexicon, SentimentThresholds,
};
use crate::geo::{load_communities, load_pois, AssignmentMethod, MatchPolicy, Resolver};
use crate::ingest::{dedup, filter_by_date, normalize_batch, parse_records, CleaningConfig, IngestSummary, Reject};
use crate::model::{load_taxonomy, Entry, EvaluationUnit, Platform, PlatformKind, Taxonomy};
use crate::report::{export_geojson, indicator_table, platform_distribution};
use crate::scoring::{city_summary, community_sentiments, scores_to_csv, total_score, CommunityScore};
use crate::weights::{compute_weights, indicator_stats, uniform_weights, IndicatorStats, WeightConfig, WeightError, WeightTable};

pub const ENTRIES: &str = "entries.jsonl";
pub const REJECTS: &str = "rejects.jsonl";
pub const INGEST_SUMMARY: &str = "ingest_summary.json";
pub const EXTRACTIONS: &str = "extractions.jsonl";
pub const EXTRACTION_FAILURES: &str = "extraction_failures.jsonl";
pub const INDICATOR_STATS: &str = "indicator_stats.json";
pub const WEIGHTS_JSON: &str = "weights.json";
pub const WEIGHTS_CSV: &str = "weights.csv";
pub const ASSIGNMENTS: &str = "assignments.jsonl";
pub const UNASSIGNED: &str = "unassigned.jsonl";
pub const SCORES_JSON: &str = "community_scores.json";
pub const SCORES_CSV: &str = "community_scores.csv";
pub const CITY_SUMMARY: &str = "city_summary.json";
pub const EVALUATION_JSON: &str = "evaluation.json";
pub const EVALUATION_CSV: &str = "evaluation.csv";
pub const EVALUATION_TXT: &str = "evaluation.txt";
pub const INDICATOR_TABLE: &str = "indicator_table.csv";
pub const PLATFORM_CSV: &str = "platform_distribution.csv";
pub const PLATFORM_JSON: &str = "platform_distribution.json";
pub const GEOJSON: &str = "communities.geojson";
pub const MANIFEST: &str = "manifest.json";
pub const ERROR_REPORT: &str = "error.json";

/// Every artifact the manifest may list, in stage order.
pub const ARTIFACTS: &[&str] = &[
    ENTRIES,
    REJECTS,
    INGEST_SUMMARY,
    EXTRACTIONS,
    EXTRACTION_FAILURES,
    INDICATOR_STATS,
    WEIGHTS_JSON,
    WEIGHTS_CSV,
    ASSIGNMENTS,
    UNASSIGNED,
    SCORES_JSON,
    SCORES_CSV,
    CITY_SUMMARY,
    EVALUATION_JSON,
    EVALUATION_CSV,
    EVALUATION_TXT,
    INDICATOR_TABLE,
    PLATFORM_CSV,
    PLATFORM_JSON,
    GEOJSON,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Extract,
    Weights,
    Score,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Ingest, Stage::Extract, Stage::Weights, Stage::Score, Stage::Evaluate, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Weights => "weights",
            Stage::Score => "score",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    pub fn config(field: impl Into<String>, message: impl fmt::Display) -> Self {
        Self::Config { field: field.into(), message: message.to_string() }
    }

    pub fn stage(stage: Stage, message: impl fmt::Display) -> Self {
        Self::Stage { stage, message: message.to_string() }
    }

    /// 2 for configuration problems, 1 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Stage { .. } => 1,
        }
    }

    /// Machine-readable error report.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Self::Config { field, message } => serde_json::json!({
                "kind": "config", "field": field, "message": message, "exit_code": self.exit_code(),
            }),
            Self::Stage { stage, message } => serde_json::json!({
                "kind": "stage", "stage": stage, "message": message, "exit_code": self.exit_code(),
            }),
        }
    }
}

/// `rule`, `llm` or `predictions:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Rule,
    Llm,
    Predictions(PathBuf),
}

impl fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rule => f.write_str("rule"),
            Self::Llm => f.write_str("llm"),
            Self::Predictions(p) => write!(f, "predictions:{}", p.display()),
        }
    }
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(Self::Rule),
            "llm" => Ok(Self::Llm),
            _ => match s.strip_prefix("predictions:") {
                Some(p) if !p.is_empty() => Ok(Self::Predictions(PathBuf::from(p))),
                _ => Err(format!("unknown backend `{s}`; expected rule, llm or predictions:<path>")),
            },
        }
    }
}

impl Serialize for BackendChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub platform: PlatformKind,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// An extra prediction file scored next to the configured backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonInput {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// Fall back to equal weights and log a warning.
    #[default]
    Uniform,
    Fail,
}

fn default_backend() -> BackendChoice {
    BackendChoice::Rule
}

/// Run configuration, read from a JSON document.
///
/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub inputs: Vec<InputSpec>,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub aoi: Option<PathBuf>,
    #[serde(default)]
    pub poi: Option<PathBuf>,
    #[serde(default)]
    pub gold: Option<PathBuf>,
    #[serde(default = "default_backend")]
    pub backend: BackendChoice,
    #[serde(default)]
    pub llm: Option<LlmClientConfig>,
    #[serde(default)]
    pub thresholds: SentimentThresholds,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub degenerate_weights: DegeneratePolicy,
    #[serde(default)]
    pub cleaning: CleaningConfig,
    #[serde(default)]
    pub matching: MatchPolicy,
    #[serde(default)]
    pub date_range: Option<DateRange>,
    #[serde(default)]
    pub compare: Vec<ComparisonInput>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Recorded in the config hash.
    #[serde(default)]
    pub seed: u64,
}

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub backend: Option<BackendChoice>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::config("config", e))
    }

    /// Reads a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::config("config", format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for input in &mut self.inputs {
            fix(&mut input.path);
        }
        for p in [&mut self.taxonomy, &mut self.lexicon, &mut self.aoi, &mut self.poi, &mut self.gold, &mut self.output_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let BackendChoice::Predictions(p) = &mut self.backend {
            fix(p);
        }
        for c in &mut self.compare {
            fix(&mut c.path);
        }
        if let Some(file) = self.llm.as_mut().and_then(|l| l.exemplars_file.as_mut()) {
            fix(file);
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = Some(dir.clone());
        }
        if let Some(b) = &overrides.backend {
            self.backend = b.clone();
        }
        if overrides.threads.is_some() {
            self.threads = overrides.threads;
        }
    }

    /// Checks every field; the error names the first offending one.
    pub fn validate(&self) -> Result<(), PipelineError> {
        fn existing(field: &str, path: &Path) -> Result<(), PipelineError> {
            if path.is_file() {
                Ok(())
            } else {
                Err(PipelineError::config(field, format!("file not found: {}", path.display())))
            }
        }
        if self.inputs.is_empty() {
            return Err(PipelineError::config("inputs", "at least one platform input is required"));
        }
        for (i, input) in self.inputs.iter().enumerate() {
            existing(&format!("inputs[{i}].path"), &input.path)?;
        }
        match &self.taxonomy {
            None => return Err(PipelineError::config("taxonomy", "taxonomy path is required")),
            Some(p) => existing("taxonomy", p)?,
        }
        if let Some(p) = &self.lexicon {
            existing("lexicon", p)?;
        }
        match &self.aoi {
            None => return Err(PipelineError::config("aoi", "AOI GeoJSON path is required")),
            Some(p) => existing("aoi", p)?,
        }
        if let Some(p) = &self.poi {
            existing("poi", p)?;
        }
        if let Some(p) = &self.gold {
            existing("gold", p)?;
        }
        match &self.backend {
            BackendChoice::Predictions(p) => existing("backend", p)?,
            BackendChoice::Llm => {
                let llm = self.llm.as_ref().ok_or_else(|| PipelineError::config("llm", "the llm backend needs an `llm` section"))?;
                if let Some(file) = &llm.exemplars_file {
                    existing("llm.exemplars_file", file)?;
                }
                if llm.exemplars_file.is_none() {
                    llm.validate().map_err(|e| PipelineError::config("llm", e))?;
                }
            }
            BackendChoice::Rule => {}
        }
        let t = self.thresholds;
        if !(t.weak > 0.0 && t.weak < t.strong && t.strong.is_finite()) {
            return Err(PipelineError::config("thresholds", "need 0 < weak < strong"));
        }
        self.weights.validate().map_err(|e| PipelineError::config("weights", e))?;
        self.cleaning.validate().map_err(|e| PipelineError::config("cleaning", e))?;
        self.matching.validate().map_err(|e| PipelineError::config("matching", e))?;
        if let Some(r) = self.date_range {
            if r.start > r.end {
                return Err(PipelineError::config("date_range", format!("start {} is after end {}", r.start, r.end)));
            }
        }
        for (i, c) in self.compare.iter().enumerate() {
            existing(&format!("compare[{i}].path"), &c.path)?;
        }
        if self.output_dir.is_none() {
            return Err(PipelineError::config("output_dir", "no output directory given"));
        }
        if self.threads == Some(0) {
            return Err(PipelineError::config("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding `output_dir` and `threads`,
    /// which do not affect results.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("threads");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsArtifact {
    /// True when the computed mass was degenerate and equal weights were used.
    pub uniform_fallback: bool,
    pub table: WeightTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ExtractionFailure {
    entry_id: String,
    error: String,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// A validated configuration with its taxonomy loaded.
pub struct Pipeline {
    config: RunConfig,
    taxonomy: Taxonomy,
    output_dir: PathBuf,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let taxonomy = load_taxonomy(config.taxonomy.as_ref().expect("validated")).map_err(|e| PipelineError::config("taxonomy", e))?;
        if let Some(p) = &config.lexicon {
            SentimentLexicon::load(p).map_err(|e| PipelineError::config("lexicon", e))?;
        }
        let output_dir = config.output_dir.clone().expect("validated");
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.threads {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| PipelineError::config("threads", e))?;
        Ok(Self { config, taxonomy, output_dir, pool })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.output_dir
    }

    pub fn run(&self, stage: Stage) -> Result<(), PipelineError> {
        std::fs::create_dir_all(&self.output_dir)
            .map_err(|e| PipelineError::config("output_dir", format!("{}: {e}", self.output_dir.display())))?;
        info!(%stage, "running stage");
        self.pool.install(|| match stage {
            Stage::Ingest => self.ingest(),
            Stage::Extract => self.extract(),
            Stage::Weights => self.weights(),
            Stage::Score => self.score(),
            Stage::Evaluate => self.evaluate(),
            Stage::Report => self.report(),
        })?;
        self.write_manifest(stage)
    }

    /// Runs every stage in order. `evaluate` is skipped when no gold file is configured.
    pub fn run_all(&self) -> Result<(), PipelineError> {
        for stage in Stage::ALL {
            if stage == Stage::Evaluate && self.config.gold.is_none() {
                warn!("no gold file configured; skipping evaluate");
                continue;
            }
            self.run(stage)?;
        }
        Ok(())
    }

    /// Writes `error.json` into the output directory, if it can be created.
    pub fn write_error_report(output_dir: &Path, error: &PipelineError) {
        if std::fs::create_dir_all(output_dir).is_ok() {
            let text = serde_json::to_string_pretty(&error.to_json()).expect("json serializes");
            if let Err(e) = std::fs::write(output_dir.join(ERROR_REPORT), text + "\n") {
                warn!("cannot write error report: {e}");
            }
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn write(&self, stage: Stage, name: &str, contents: &str) -> Result<(), PipelineError> {
        std::fs::write(self.path(name), contents).map_err(|e| PipelineError::stage(stage, format!("cannot write {name}: {e}")))
    }

    fn write_json<T: Serialize>(&self, stage: Stage, name: &str, value: &T) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::stage(stage, e))?;
        self.write(stage, name, &(text + "\n"))
    }

    fn write_jsonl<T: Serialize>(&self, stage: Stage, name: &str, items: &[T]) -> Result<(), PipelineError> {
        let mut out = String::new();
        for item in items {
            out.push_str(&serde_json::to_string(item).map_err(|e| PipelineError::stage(stage, e))?);
            out.push('\n');
        }
        self.write(stage, name, &out)
    }

    fn read_upstream(&self, stage: Stage, name: &str) -> Result<String, PipelineError> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(PipelineError::stage(stage, format!("missing upstream artifact: {name}")));
        }
        std::fs::read_to_string(&path).map_err(|e| PipelineError::stage(stage, format!("cannot read {name}: {e}")))
    }

    fn read_json<T: DeserializeOwned>(&self, stage: Stage, name: &str) -> Result<T, PipelineError> {
        let text = self.read_upstream(stage, name)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::stage(stage, format!("corrupt artifact {name}: {e}")))
    }

    fn read_jsonl<T: DeserializeOwned>(&self, stage: Stage, name: &str) -> Result<Vec<T>, PipelineError> {
        let text = self.read_upstream(stage, name)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| PipelineError::stage(stage, format!("corrupt artifact {name} line {}: {e}", i + 1)))
            })
            .collect()
    }

    fn write_manifest(&self, stage: Stage) -> Result<(), PipelineError> {
        let mut artifacts = BTreeMap::new();
        for name in ARTIFACTS {
            let path = self.path(name);
            if path.is_file() {
                let digest = sha256_file(&path).map_err(|e| PipelineError::stage(stage, format!("cannot hash {name}: {e}")))?;
                artifacts.insert(name.to_string(), digest);
            }
        }
        let manifest = Manifest { config_hash: self.config.hash(), artifacts };
        self.write_json(stage, MANIFEST, &manifest)
    }

    fn ingest(&self) -> Result<(), PipelineError> {
        let stage = Stage::Ingest;
        let mut summary = IngestSummary::default();
        let mut records = Vec::new();
        let mut rejects: Vec<Reject> = Vec::new();
        for input in &self.config.inputs {
            let label = input.label.clone().unwrap_or_else(|| input.platform.to_string());
            let parsed = parse_records(&Platform::new(input.platform, label), &input.path).map_err(|e| PipelineError::stage(stage, e))?;
            *summary.raw_records.entry(input.platform).or_insert(0) += parsed.records.len() + parsed.rejects.len();
            records.extend(parsed.records);
            rejects.extend(parsed.rejects);
        }
        let batch = normalize_batch(&records, &self.config.cleaning);
        rejects.extend(batch.rejects);
        let deduped = dedup(batch.entries);
        let before = deduped.kept.len();
        let entries = match self.config.date_range {
            Some(r) => filter_by_date(deduped.kept, r.start, r.end).map_err(|e| PipelineError::stage(stage, e))?,
            None => deduped.kept,
        };
        rejects.sort_by(|a, b| (a.platform, a.row, &a.reason).cmp(&(b.platform, b.row, &b.reason)));
        summary.rejected = rejects.len();
        summary.duplicates_dropped = deduped.dropped_count;
        summary.outside_date_range = before - entries.len();
        summary.entries = entries.len();
        info!(entries = entries.len(), rejected = rejects.len(), "ingest done");
        self.write_jsonl(stage, ENTRIES, &entries)?;
        self.write_jsonl(stage, REJECTS, &rejects)?;
        self.write_json(stage, INGEST_SUMMARY, &summary)
    }

    fn lexicon(&self) -> SentimentLexicon {
        match &self.config.lexicon {
            Some(p) => SentimentLexicon::load(p).expect("checked in Pipeline::new"),
            None => SentimentLexicon::shipped_default(),
        }
    }

    fn backend_named(&self, stage: Stage, choice: &BackendChoice) -> Result<Box<dyn ExtractionBackend>, PipelineError> {
        Ok(match choice {
            BackendChoice::Rule => Box::new(RuleBasedBackend { lexicon: self.lexicon(), thresholds: self.config.thresholds }),
            BackendChoice::Predictions(path) => Box::new(
                PredictionFileBackend::load("predictions", path).map_err(|e| PipelineError::stage(stage, e))?,
            ),
            BackendChoice::Llm => {
                let mut llm = self.config.llm.clone().expect("validated");
                if let Some(file) = &llm.exemplars_file {
                    let text = std::fs::read_to_string(file).map_err(|e| PipelineError::stage(stage, e))?;
                    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                        let ex: Exemplar = serde_json::from_str(line)
                            .map_err(|e| PipelineError::stage(stage, format!("exemplars line {}: {e}", i + 1)))?;
                        llm.exemplars.push(ex);
                    }
                }
                Box::new(LlmBackend::new(llm).map_err(|e| PipelineError::stage(stage, e))?)
            }
        })
    }

    fn extract(&self) -> Result<(), PipelineError> {
        let stage = Stage::Extract;
        let entries: Vec<Entry> = self.read_jsonl(stage, ENTRIES)?;
        let backend = self.backend_named(stage, &self.config.backend)?;
        let outcomes = backend.extract_batch(&entries, &self.taxonomy);
        let mut results = Vec::new();
        let mut failures = Vec::new();
        for (entry, outcome) in entries.iter().zip(outcomes) {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) => failures.push(ExtractionFailure { entry_id: entry.id.clone(), error: e.to_string() }),
            }
        }
        if !entries.is_empty() && results.is_empty() {
            let first = failures.first().map(|f| f.error.clone()).unwrap_or_default();
            return Err(PipelineError::stage(stage, format!("backend failed on every entry; first error: {first}")));
        }
        if !failures.is_empty() {
            warn!(count = failures.len(), "entries failed extraction");
        }
        results.sort_by(|a, b| a.entry_id.cmp(&b.entry_id));
        self.write_jsonl(stage, EXTRACTIONS, &results)?;
        self.write_jsonl(stage, EXTRACTION_FAILURES, &failures)
    }

    fn units(&self, stage: Stage) -> Result<Vec<EvaluationUnit>, PipelineError> {
        let results: Vec<ExtractionResult> = self.read_jsonl(stage, EXTRACTIONS)?;
        for r in &results {
            r.check(&self.taxonomy)
                .map_err(|e| PipelineError::stage(stage, format!("invalid extraction for `{}`: {e}", r.entry_id)))?;
        }
        Ok(results.into_iter().flat_map(|r| r.units).collect())
    }

    fn weights(&self) -> Result<(), PipelineError> {
        let stage = Stage::Weights;
        let units = self.units(stage)?;
        let stats = indicator_stats(&units, &self.taxonomy);
        let (table, uniform_fallback) = match compute_weights(&stats, &self.config.weights) {
            Ok(t) => (t, false),
            Err(e @ WeightError::DegenerateMass { .. }) if self.config.degenerate_weights == DegeneratePolicy::Uniform => {
                warn!("{e}; using uniform weights");
                (uniform_weights(&stats, &self.config.weights), true)
            }
            Err(e) => return Err(PipelineError::stage(stage, e)),
        };
        self.write_json(stage, INDICATOR_STATS, &stats)?;
        self.write(stage, WEIGHTS_CSV, &table.to_csv())?;
        self.write_json(stage, WEIGHTS_JSON, &WeightsArtifact { uniform_fallback, table })
    }

    fn resolver(&self, stage: Stage) -> Result<Resolver, PipelineError> {
        let communities = load_communities(self.config.aoi.as_ref().expect("validated")).map_err(|e| PipelineError::stage(stage, e))?;
        let pois = match &self.config.poi {
            Some(p) => load_pois(p).map_err(|e| PipelineError::stage(stage, e))?,
            None => Vec::new(),
        };
        Resolver::new(communities, pois, self.config.matching.clone()).map_err(|e| PipelineError::stage(stage, e))
    }

    fn score(&self) -> Result<(), PipelineError> {
        use rayon::prelude::*;

        let stage = Stage::Score;
        let weights: WeightsArtifact = self.read_json(stage, WEIGHTS_JSON)?;
        let entries: Vec<Entry> = self.read_jsonl(stage, ENTRIES)?;
        let units = self.units(stage)?;
        let resolver = self.resolver(stage)?;

        let assignments: Vec<_> = entries.par_iter().map(|e| resolver.resolve(e)).collect();
        let unassigned: Vec<_> = assignments.iter().filter(|a| a.method == AssignmentMethod::Unassigned).cloned().collect();
        let by_entry: HashMap<&str, &str> = assignments
            .iter()
            .filter_map(|a| a.community_id.as_deref().map(|c| (a.entry_id.as_str(), c)))
            .collect();
        let assigned_units = units.iter().filter_map(|u| by_entry.get(u.entry_id.as_str()).map(|c| (*c, u)));
        let sentiments = community_sentiments(assigned_units);
        let scores: Vec<CommunityScore> = sentiments.par_iter().map(|s| total_score(s, &weights.table)).collect();
        let total_communities = resolver.index().communities().len();
        let summary = city_summary(&scores, &weights.table, &self.taxonomy, total_communities)
            .map_err(|e| PipelineError::stage(stage, format!("{e}: no extracted unit could be assigned to a community")))?;
        info!(covered = summary.covered_communities, total = total_communities, mean = summary.mean_total, "scoring done");

        self.write_jsonl(stage, ASSIGNMENTS, &assignments)?;
        self.write_jsonl(stage, UNASSIGNED, &unassigned)?;
        self.write_json(stage, SCORES_JSON, &scores)?;
        self.write(stage, SCORES_CSV, &scores_to_csv(&scores))?;
        self.write_json(stage, CITY_SUMMARY, &summary)
    }

    fn evaluate(&self) -> Result<(), PipelineError> {
        let stage = Stage::Evaluate;
        let gold_path = self.config.gold.as_ref().ok_or_else(|| PipelineError::config("gold", "evaluate needs a gold file"))?;
        let gold = load_gold(gold_path, &self.taxonomy).map_err(|e| PipelineError::stage(stage, e))?;
        let primary = self.backend_named(stage, &self.config.backend)?;
        let mut comparison: Comparison = compare_backends(&gold, &[primary.as_ref()], &self.taxonomy);
        let entries: Vec<Entry> = gold.iter().map(|g| g.entry.clone()).collect();
        for c in &self.config.compare {
            let backend = PredictionFileBackend::load(c.name.clone(), &c.path).map_err(|e| PipelineError::stage(stage, e))?;
            let outcomes = backend.extract_batch(&entries, &self.taxonomy);
            comparison.columns.push(score_outcomes(&c.name, &gold, &outcomes));
        }
        self.write_json(stage, EVALUATION_JSON, &comparison)?;
        self.write(stage, EVALUATION_CSV, &comparison.to_csv())?;
        self.write(stage, EVALUATION_TXT, &comparison.to_text())
    }

    fn report(&self) -> Result<(), PipelineError> {
        let stage = Stage::Report;
        let stats: Vec<IndicatorStats> = self.read_json(stage, INDICATOR_STATS)?;
        let weights: WeightsArtifact = self.read_json(stage, WEIGHTS_JSON)?;
        let scores: Vec<CommunityScore> = self.read_json(stage, SCORES_JSON)?;
        let entries: Vec<Entry> = self.read_jsonl(stage, ENTRIES)?;
        let units = self.units(stage)?;

        let table = indicator_table(&stats, &weights.table, &self.taxonomy).map_err(|e| PipelineError::stage(stage, e))?;
        self.write(stage, INDICATOR_TABLE, &table)?;

        let platform_of: HashMap<&str, PlatformKind> = entries.iter().map(|e| (e.id.as_str(), e.platform.kind)).collect();
        let with_platform = units.iter().filter_map(|u| platform_of.get(u.entry_id.as_str()).map(|p| (*p, u)));
        let distribution = platform_distribution(with_platform, &self.taxonomy);
        self.write(stage, PLATFORM_CSV, &distribution.to_csv(&self.taxonomy))?;
        self.write_json(stage, PLATFORM_JSON, &distribution)?;

        let communities = load_communities(self.config.aoi.as_ref().expect("validated")).map_err(|e| PipelineError::stage(stage, e))?;
        let geojson = export_geojson(&communities, &scores).map_err(|e| PipelineError::stage(stage, e))?;
        self.write_json(stage, GEOJSON, &geojson)
    }
}
