//! Output artifacts: indicator tables, platform distributions, score maps.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{Community, EvaluationUnit, PlatformKind, Ring, Taxonomy};
use crate::scoring::{csv_field, CommunityScore};
use crate::weights::{IndicatorStats, WeightTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("score for unknown community `{0}`")]
    DanglingScore(String),
    #[error("stats and weights cover different indicators: {0}")]
    CoverageMismatch(String),
}

/// Share of each platform's units per category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlatformDistribution {
    pub unit_counts: BTreeMap<PlatformKind, BTreeMap<u32, usize>>,
    pub shares: BTreeMap<PlatformKind, BTreeMap<u32, f64>>,
}

impl PlatformDistribution {
    pub fn share(&self, platform: PlatformKind, category: u32) -> Option<f64> {
        self.shares.get(&platform)?.get(&category).copied()
    }

    /// CSV `platform,category_id,category,units,share`.
    pub fn to_csv(&self, taxonomy: &Taxonomy) -> String {
        let mut out = String::from("platform,category_id,category,units,share\n");
        for (platform, shares) in &self.shares {
            for (cat, share) in shares {
                let name = taxonomy.category(*cat).map(|c| c.name.as_str()).unwrap_or_default();
                let units = self.unit_counts[platform].get(cat).copied().unwrap_or(0);
                out.push_str(&format!("{platform},{cat},{},{units},{share}\n", csv_field(name)));
            }
        }
        out
    }
}

/// Per-platform category shares. Every taxonomy category gets a row; platforms
/// without units are omitted.
pub fn platform_distribution<'a>(
    units: impl IntoIterator<Item = (PlatformKind, &'a EvaluationUnit)>,
    taxonomy: &Taxonomy,
) -> PlatformDistribution {
    let mut unit_counts: BTreeMap<PlatformKind, BTreeMap<u32, usize>> = BTreeMap::new();
    for (platform, unit) in units {
        let row = unit_counts
            .entry(platform)
            .or_insert_with(|| taxonomy.categories().iter().map(|c| (c.id, 0)).collect());
        *row.entry(unit.indicator_id.category).or_insert(0) += 1;
    }
    let shares = unit_counts
        .iter()
        .map(|(p, row)| {
            let total: usize = row.values().sum();
            (*p, row.iter().map(|(c, n)| (*c, *n as f64 / total as f64)).collect())
        })
        .collect();
    PlatformDistribution { unit_counts, shares }
}

fn ring_json(ring: &Ring) -> Value {
    let v = ring.vertices();
    let mut coords: Vec<Value> = v.iter().map(|(lat, lon)| json!([lon, lat])).collect();
    coords.push(json!([v[0].1, v[0].0]));
    Value::Array(coords)
}

/// FeatureCollection of all communities, sorted by id, with score properties.
///
/// Unscored communities carry `total` and `coverage` as null.
pub fn export_geojson(communities: &[Community], scores: &[CommunityScore]) -> Result<Value, ReportError> {
    let ids: BTreeSet<&str> = communities.iter().map(|c| c.id.as_str()).collect();
    let mut by_id: BTreeMap<&str, &CommunityScore> = BTreeMap::new();
    for s in scores {
        if !ids.contains(s.community_id.as_str()) {
            return Err(ReportError::DanglingScore(s.community_id.clone()));
        }
        by_id.insert(&s.community_id, s);
    }
    let mut sorted: Vec<&Community> = communities.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let features: Vec<Value> = sorted
        .into_iter()
        .map(|c| {
            let polygons: Vec<Value> = c
                .parts
                .iter()
                .map(|p| {
                    let mut rings = vec![ring_json(&p.exterior)];
                    rings.extend(p.holes.iter().map(ring_json));
                    Value::Array(rings)
                })
                .collect();
            let geometry = if polygons.len() == 1 {
                json!({"type": "Polygon", "coordinates": polygons[0]})
            } else {
                json!({"type": "MultiPolygon", "coordinates": polygons})
            };
            let score = by_id.get(c.id.as_str());
            json!({
                "type": "Feature",
                "id": c.id,
                "geometry": geometry,
                "properties": {
                    "id": c.id,
                    "name": c.name,
                    "total": score.map(|s| s.total),
                    "coverage": score.map(|s| s.coverage),
                },
            })
        })
        .collect();
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

/// CSV `indicator_id,name,category,F,F_log,I,W,mean_sentiment`, one row per indicator in id order.
pub fn indicator_table(stats: &[IndicatorStats], weights: &WeightTable, taxonomy: &Taxonomy) -> Result<String, ReportError> {
    let stat_ids: BTreeSet<_> = stats.iter().map(|s| s.indicator_id).collect();
    let weight_ids: BTreeSet<_> = weights.rows().iter().map(|r| r.indicator_id).collect();
    if stat_ids != weight_ids || stat_ids.len() != stats.len() {
        let diff: Vec<String> = stat_ids.symmetric_difference(&weight_ids).map(|i| i.to_string()).collect();
        let detail = if diff.is_empty() { "duplicate stats rows".to_string() } else { diff.join(", ") };
        return Err(ReportError::CoverageMismatch(detail));
    }
    let mut sorted: Vec<&IndicatorStats> = stats.iter().collect();
    sorted.sort_by_key(|s| s.indicator_id);
    let mut out = String::from("indicator_id,name,category,F,F_log,I,W,mean_sentiment\n");
    for (s, w) in sorted.into_iter().zip(weights.rows()) {
        let (name, category) = match taxonomy.indicator(s.indicator_id) {
            Some(ind) => (
                ind.name.as_str(),
                taxonomy.category(ind.category_id()).map(|c| c.name.as_str()).unwrap_or_default(),
            ),
            None => ("", ""),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.indicator_id,
            csv_field(name),
            csv_field(category),
            s.frequency,
            w.log_frequency,
            w.importance,
            w.weight,
            s.mean_sentiment
        ));
    }
    Ok(out)
}
