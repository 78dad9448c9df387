//! Accuracy of extraction backends against gold annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{ExtractError, ExtractionBackend, ExtractionResult};
use crate::model::{Entry, EvaluationUnit, Taxonomy};

/// A manually annotated entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub entry: Entry,
    pub relevant: bool,
    #[serde(default)]
    pub units: Vec<EvaluationUnit>,
}

impl GoldAnnotation {
    /// The annotation as an extraction result, e.g. to replay gold as predictions.
    pub fn as_result(&self) -> ExtractionResult {
        let mut r = ExtractionResult {
            entry_id: self.entry.id.clone(),
            relevant: self.relevant,
            units: self.units.clone(),
            diagnostics: Vec::new(),
        };
        r.stamp_units();
        r
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("gold line {line}: {detail}")]
    Gold { line: usize, detail: String },
    #[error("no result/gold pairs to score")]
    EmptyInput,
    #[error("result for `{result}` paired with gold `{gold}`")]
    Mismatch { result: String, gold: String },
}

/// Parses gold JSON-lines; unit entry ids are filled from the entry.
pub fn parse_gold(text: &str, taxonomy: &Taxonomy) -> Result<Vec<GoldAnnotation>, EvalError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let mut gold: GoldAnnotation =
            serde_json::from_str(line).map_err(|e| EvalError::Gold { line: line_no, detail: e.to_string() })?;
        for u in &mut gold.units {
            u.entry_id.clone_from(&gold.entry.id);
        }
        gold.as_result().check(taxonomy).map_err(|detail| EvalError::Gold { line: line_no, detail })?;
        if !seen.insert(gold.entry.id.clone()) {
            return Err(EvalError::Gold { line: line_no, detail: format!("duplicate entry id `{}`", gold.entry.id) });
        }
        out.push(gold);
    }
    Ok(out)
}

pub fn load_gold(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<GoldAnnotation>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    parse_gold(&text, taxonomy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Indicator,
    Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitMatch {
    pub predicted: usize,
    pub gold: usize,
    pub kind: MatchKind,
}

/// One-to-one pairing of predicted and gold units for one entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub matches: Vec<UnitMatch>,
    /// Gold indices with no partner.
    pub missed: Vec<usize>,
    /// Predicted indices with no partner.
    pub spurious: Vec<usize>,
}

/// Greedy alignment: exact indicator first, then same category, each pass
/// walking gold in order and taking the first free prediction.
pub fn align_units(predicted: &[EvaluationUnit], gold: &[EvaluationUnit]) -> Alignment {
    let mut pred_used = vec![false; predicted.len()];
    let mut gold_match: Vec<Option<UnitMatch>> = vec![None; gold.len()];
    let passes: [(MatchKind, fn(&EvaluationUnit, &EvaluationUnit) -> bool); 2] = [
        (MatchKind::Indicator, |p, g| p.indicator_id == g.indicator_id),
        (MatchKind::Category, |p, g| p.indicator_id.category == g.indicator_id.category),
    ];
    for (kind, same) in passes {
        for (gi, g) in gold.iter().enumerate() {
            if gold_match[gi].is_some() {
                continue;
            }
            if let Some(pi) = (0..predicted.len()).find(|&pi| !pred_used[pi] && same(&predicted[pi], g)) {
                pred_used[pi] = true;
                gold_match[gi] = Some(UnitMatch { predicted: pi, gold: gi, kind });
            }
        }
    }
    Alignment {
        matches: gold_match.iter().flatten().copied().collect(),
        missed: gold_match.iter().enumerate().filter(|(_, m)| m.is_none()).map(|(i, _)| i).collect(),
        spurious: pred_used.iter().enumerate().filter(|(_, u)| !**u).map(|(i, _)| i).collect(),
    }
}

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self { labels, counts: vec![vec![0; n]; n] }
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.counts[row].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Per gold category: how its units were recovered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryBreakdown {
    pub gold_units: usize,
    pub indicator_matched: usize,
    pub category_matched: usize,
    pub missed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub entries: usize,
    pub gold_units: usize,
    pub predicted_units: usize,
    pub indicator_matches: usize,
    pub category_matches: usize,
    pub spurious_units: usize,
}

/// Accuracy figures. A ratio with an empty denominator is reported as 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub relevance_accuracy: f64,
    /// Gold units matched at category level (exact or same-category) / gold units.
    pub object_accuracy: f64,
    pub indicator_accuracy: f64,
    /// Over indicator-matched pairs.
    pub sentiment_exact_accuracy: f64,
    /// Over indicator-matched pairs.
    pub sentiment_within_one_accuracy: f64,
    pub unit_exact_accuracy: f64,
    /// Indicator matches / predicted units.
    pub unit_precision: f64,
    pub relevance_confusion: ConfusionMatrix,
    pub sentiment_confusion: ConfusionMatrix,
    pub categories: BTreeMap<u32, CategoryBreakdown>,
    pub counts: SampleCounts,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores results against gold. Pairs must refer to the same entry.
pub fn compute_metrics<'a>(
    pairs: impl IntoIterator<Item = (&'a ExtractionResult, &'a GoldAnnotation)>,
) -> Result<MetricsReport, EvalError> {
    let mut counts = SampleCounts::default();
    let mut relevance_correct = 0;
    let mut sentiment_exact = 0;
    let mut sentiment_near = 0;
    let mut relevance = ConfusionMatrix::new(vec!["irrelevant".into(), "relevant".into()]);
    let mut sentiment = ConfusionMatrix::new((-2..=2).map(|s: i8| s.to_string()).collect());
    let mut categories: BTreeMap<u32, CategoryBreakdown> = BTreeMap::new();

    for (result, gold) in pairs {
        if result.entry_id != gold.entry.id {
            return Err(EvalError::Mismatch { result: result.entry_id.clone(), gold: gold.entry.id.clone() });
        }
        counts.entries += 1;
        if result.relevant == gold.relevant {
            relevance_correct += 1;
        }
        relevance.counts[usize::from(gold.relevant)][usize::from(result.relevant)] += 1;

        let alignment = align_units(&result.units, &gold.units);
        counts.gold_units += gold.units.len();
        counts.predicted_units += result.units.len();
        counts.spurious_units += alignment.spurious.len();
        for g in &gold.units {
            categories.entry(g.indicator_id.category).or_default().gold_units += 1;
        }
        for &gi in &alignment.missed {
            categories.entry(gold.units[gi].indicator_id.category).or_default().missed += 1;
        }
        for m in &alignment.matches {
            let g = &gold.units[m.gold];
            let p = &result.units[m.predicted];
            let row = categories.entry(g.indicator_id.category).or_default();
            match m.kind {
                MatchKind::Category => {
                    counts.category_matches += 1;
                    row.category_matched += 1;
                }
                MatchKind::Indicator => {
                    counts.indicator_matches += 1;
                    row.indicator_matched += 1;
                    let (gs, ps) = (g.sentiment.value(), p.sentiment.value());
                    if gs == ps {
                        sentiment_exact += 1;
                    }
                    if (gs - ps).abs() <= 1 {
                        sentiment_near += 1;
                    }
                    if g.sentiment.is_valid() && p.sentiment.is_valid() {
                        sentiment.counts[(gs + 2) as usize][(ps + 2) as usize] += 1;
                    }
                }
            }
        }
    }
    if counts.entries == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(MetricsReport {
        relevance_accuracy: ratio(relevance_correct, counts.entries),
        object_accuracy: ratio(counts.indicator_matches + counts.category_matches, counts.gold_units),
        indicator_accuracy: ratio(counts.indicator_matches, counts.gold_units),
        sentiment_exact_accuracy: ratio(sentiment_exact, counts.indicator_matches),
        sentiment_within_one_accuracy: ratio(sentiment_near, counts.indicator_matches),
        unit_exact_accuracy: ratio(sentiment_exact, counts.gold_units),
        unit_precision: ratio(counts.indicator_matches, counts.predicted_units),
        relevance_confusion: relevance,
        sentiment_confusion: sentiment,
        categories,
        counts,
    })
}

/// One backend's column in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendColumn {
    pub backend: String,
    /// False when some gold entries produced no result; metrics then cover the rest.
    pub complete: bool,
    pub failures: BTreeMap<String, String>,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<BackendColumn>,
}

type MetricRow = (&'static str, fn(&MetricsReport) -> f64);

const METRIC_ROWS: [MetricRow; 7] = [
    ("relevance_accuracy", |m| m.relevance_accuracy),
    ("object_accuracy", |m| m.object_accuracy),
    ("indicator_accuracy", |m| m.indicator_accuracy),
    ("sentiment_exact_accuracy", |m| m.sentiment_exact_accuracy),
    ("sentiment_within_one_accuracy", |m| m.sentiment_within_one_accuracy),
    ("unit_exact_accuracy", |m| m.unit_exact_accuracy),
    ("unit_precision", |m| m.unit_precision),
];

impl Comparison {
    fn rows(&self) -> Vec<(String, Vec<String>)> {
        let mut rows = vec![(
            "complete".to_string(),
            self.columns.iter().map(|c| c.complete.to_string()).collect::<Vec<_>>(),
        )];
        rows.push((
            "entries_scored".into(),
            self.columns
                .iter()
                .map(|c| c.metrics.as_ref().map_or(0, |m| m.counts.entries).to_string())
                .collect(),
        ));
        for (name, get) in METRIC_ROWS {
            rows.push((
                name.to_string(),
                self.columns
                    .iter()
                    .map(|c| c.metrics.as_ref().map_or_else(|| "".to_string(), |m| format!("{:.4}", get(m))))
                    .collect(),
            ));
        }
        rows
    }

    pub fn column(&self, backend: &str) -> Option<&BackendColumn> {
        self.columns.iter().find(|c| c.backend == backend)
    }

    /// CSV with one row per metric and one column per backend.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.columns {
            out.push(',');
            out.push_str(&crate::scoring::csv_field(&c.backend));
        }
        out.push('\n');
        for (name, cells) in self.rows() {
            out.push_str(&name);
            for cell in cells {
                out.push(',');
                out.push_str(&cell);
            }
            out.push('\n');
        }
        out
    }

    /// Space-aligned text table.
    pub fn to_text(&self) -> String {
        let mut header = vec!["metric".to_string()];
        header.extend(self.columns.iter().map(|c| c.backend.clone()));
        let mut table = vec![header];
        for (name, cells) in self.rows() {
            let mut row = vec![name];
            row.extend(cells);
            table.push(row);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| table.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, cell)| {
                    let pad = widths[j] - cell.chars().count();
                    if j == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Scores one backend's per-entry outcomes (aligned with `gold`).
pub fn score_outcomes(
    backend: &str,
    gold: &[GoldAnnotation],
    outcomes: &[Result<ExtractionResult, ExtractError>],
) -> BackendColumn {
    let mut failures = BTreeMap::new();
    let mut pairs = Vec::new();
    for (g, outcome) in gold.iter().zip(outcomes) {
        match outcome {
            Ok(r) => pairs.push((r, g)),
            Err(e) => {
                failures.insert(g.entry.id.clone(), e.to_string());
            }
        }
    }
    BackendColumn {
        backend: backend.to_string(),
        complete: failures.is_empty(),
        failures,
        metrics: compute_metrics(pairs).ok(),
    }
}

/// Runs every backend on the gold entries; columns follow `backends` order.
pub fn compare_backends(gold: &[GoldAnnotation], backends: &[&dyn ExtractionBackend], taxonomy: &Taxonomy) -> Comparison {
    let entries: Vec<Entry> = gold.iter().map(|g| g.entry.clone()).collect();
    let columns = backends
        .iter()
        .map(|b| score_outcomes(&b.descriptor().name, gold, &b.extract_batch(&entries, taxonomy)))
        .collect();
    Comparison { columns }
}
