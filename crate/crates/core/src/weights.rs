//! Indicator weights from sentiment intensity and frequency.
//!
//! For indicator `i` with importance `I_i` (sentiment intensity) and
//! frequency term `Φ_i`, the weight is `W_i = I_i·Φ_i / Σ_j I_j·Φ_j`.
//! `Φ_i` is the log frequency `ln(F_i + 1)` by default, or the raw count
//! `F_i` when `use_log_frequency` is off.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EvaluationUnit, IndicatorId, Taxonomy};

/// Per-indicator frequency and sentiment statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorStats {
    pub indicator_id: IndicatorId,
    pub frequency: u64,
    /// Mean over units of `|s|`.
    pub mean_abs_sentiment: f64,
    /// `|mean over units of s|`.
    pub abs_mean_sentiment: f64,
    pub mean_sentiment: f64,
}

impl IndicatorStats {
    /// Stats from counts of units at sentiment -2, -1, 0, 1, 2 (in that order).
    pub fn from_histogram(indicator_id: IndicatorId, counts: [u64; 5]) -> Self {
        let frequency: u64 = counts.iter().sum();
        if frequency == 0 {
            return Self { indicator_id, frequency, mean_abs_sentiment: 0.0, abs_mean_sentiment: 0.0, mean_sentiment: 0.0 };
        }
        let mut signed = 0i64;
        let mut absolute = 0u64;
        for (k, &c) in counts.iter().enumerate() {
            let s = k as i64 - 2;
            signed += s * c as i64;
            absolute += s.unsigned_abs() * c;
        }
        let n = frequency as f64;
        let mean_sentiment = signed as f64 / n;
        Self {
            indicator_id,
            frequency,
            mean_abs_sentiment: absolute as f64 / n,
            abs_mean_sentiment: mean_sentiment.abs(),
            mean_sentiment,
        }
    }
}

/// One stats row per taxonomy indicator (id order), zero-frequency rows included.
///
/// Units on indicators outside the taxonomy are ignored; callers validate first.
pub fn indicator_stats<'a>(units: impl IntoIterator<Item = &'a EvaluationUnit>, taxonomy: &Taxonomy) -> Vec<IndicatorStats> {
    let mut histograms: BTreeMap<IndicatorId, [u64; 5]> = taxonomy.indicator_ids().map(|id| (id, [0; 5])).collect();
    for unit in units {
        let s = unit.sentiment.value();
        if !unit.sentiment.is_valid() {
            continue;
        }
        if let Some(h) = histograms.get_mut(&unit.indicator_id) {
            h[(s + 2) as usize] += 1;
        }
    }
    histograms.into_iter().map(|(id, h)| IndicatorStats::from_histogram(id, h)).collect()
}

/// Natural-log frequency `ln(F + 1)`.
pub fn log_frequency(frequency: u64) -> f64 {
    (frequency as f64).ln_1p()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    /// Mean of per-unit `|s|`.
    #[default]
    MeanAbs,
    /// Absolute value of the mean sentiment.
    AbsMean,
}

impl ImportanceMode {
    pub fn importance(self, stats: &IndicatorStats) -> f64 {
        match self {
            Self::MeanAbs => stats.mean_abs_sentiment,
            Self::AbsMean => stats.abs_mean_sentiment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub use_log_frequency: bool,
    pub importance_mode: ImportanceMode,
    /// Total mass at or below this is degenerate.
    pub epsilon: f64,
    /// Base of the frequency logarithm. Weights do not depend on it.
    pub log_base: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            use_log_frequency: true,
            importance_mode: ImportanceMode::MeanAbs,
            epsilon: 1e-12,
            log_base: std::f64::consts::E,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<(), WeightError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(WeightError::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.log_base > 0.0) || self.log_base == 1.0 || !self.log_base.is_finite() {
            return Err(WeightError::InvalidConfig(format!("log_base must be positive and not 1, got {}", self.log_base)));
        }
        Ok(())
    }

    fn frequency_term(&self, frequency: u64) -> f64 {
        if !self.use_log_frequency {
            frequency as f64
        } else if self.log_base == std::f64::consts::E {
            log_frequency(frequency)
        } else {
            log_frequency(frequency) / self.log_base.ln()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("degenerate weight mass: sum of importance x frequency is {mass}")]
    DegenerateMass { mass: f64 },
    #[error("invalid weight config: {0}")]
    InvalidConfig(String),
}

/// One weight-table row; `log_frequency` is always natural-base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub indicator_id: IndicatorId,
    pub frequency: u64,
    pub log_frequency: f64,
    pub importance: f64,
    pub weight: f64,
}

/// Weights for every taxonomy indicator, in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    rows: Vec<WeightRow>,
}

impl WeightTable {
    pub fn from_rows(mut rows: Vec<WeightRow>) -> Self {
        rows.sort_by_key(|r| r.indicator_id);
        Self { rows }
    }

    pub fn rows(&self) -> &[WeightRow] {
        &self.rows
    }

    pub fn weight(&self, id: IndicatorId) -> Option<f64> {
        self.rows.binary_search_by_key(&id, |r| r.indicator_id).ok().map(|ix| self.rows[ix].weight)
    }

    pub fn iter(&self) -> impl Iterator<Item = (IndicatorId, f64)> + '_ {
        self.rows.iter().map(|r| (r.indicator_id, r.weight))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.weight).sum()
    }

    /// CSV with columns `indicator_id,F,F_log,I,W`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("indicator_id,F,F_log,I,W\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.indicator_id, r.frequency, r.log_frequency, r.importance, r.weight));
        }
        out
    }
}

/// Normalized weights `W_i = I_i·Φ_i / Σ_j I_j·Φ_j`.
pub fn compute_weights(stats: &[IndicatorStats], config: &WeightConfig) -> Result<WeightTable, WeightError> {
    config.validate()?;
    let masses: Vec<f64> = stats
        .iter()
        .map(|s| config.importance_mode.importance(s) * config.frequency_term(s.frequency))
        .collect();
    let total: f64 = masses.iter().sum();
    if !(total > config.epsilon) {
        return Err(WeightError::DegenerateMass { mass: total });
    }
    let rows = stats
        .iter()
        .zip(&masses)
        .map(|(s, m)| WeightRow {
            indicator_id: s.indicator_id,
            frequency: s.frequency,
            log_frequency: log_frequency(s.frequency),
            importance: config.importance_mode.importance(s),
            weight: m / total,
        })
        .collect();
    Ok(WeightTable::from_rows(rows))
}

/// Equal weights over all indicators; the fallback for degenerate mass.
pub fn uniform_weights(stats: &[IndicatorStats], config: &WeightConfig) -> WeightTable {
    let n = stats.len().max(1) as f64;
    WeightTable::from_rows(
        stats
            .iter()
            .map(|s| WeightRow {
                indicator_id: s.indicator_id,
                frequency: s.frequency,
                log_frequency: log_frequency(s.frequency),
                importance: config.importance_mode.importance(s),
                weight: 1.0 / n,
            })
            .collect(),
    )
}
