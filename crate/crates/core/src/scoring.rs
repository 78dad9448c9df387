//! Community and citywide housing-quality scores.
//!
//! `Total = Σ W_i · |S_i + 3|`, where `S_i` is the community's mean sentiment
//! on indicator `i` and unmentioned indicators count as neutral (`S_i = 0`).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EvaluationUnit, IndicatorId, Taxonomy};
use crate::weights::WeightTable;

/// Mean sentiment per mentioned indicator for one community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySentiment {
    pub community_id: String,
    pub means: BTreeMap<IndicatorId, f64>,
    pub unit_counts: BTreeMap<IndicatorId, usize>,
}

impl CommunitySentiment {
    pub fn mentioned(&self) -> impl Iterator<Item = IndicatorId> + '_ {
        self.means.keys().copied()
    }

    pub fn unit_count(&self) -> usize {
        self.unit_counts.values().sum()
    }
}

/// Averages unit sentiments per indicator for one community.
pub fn community_sentiment<'a>(community_id: &str, units: impl IntoIterator<Item = &'a EvaluationUnit>) -> CommunitySentiment {
    let mut sums: BTreeMap<IndicatorId, (i64, usize)> = BTreeMap::new();
    for u in units {
        let e = sums.entry(u.indicator_id).or_default();
        e.0 += i64::from(u.sentiment.value());
        e.1 += 1;
    }
    CommunitySentiment {
        community_id: community_id.to_string(),
        means: sums.iter().map(|(id, (s, n))| (*id, *s as f64 / *n as f64)).collect(),
        unit_counts: sums.iter().map(|(id, (_, n))| (*id, *n)).collect(),
    }
}

/// Groups `(community_id, unit)` pairs and averages each group. Output is sorted by id.
pub fn community_sentiments<'a, S: AsRef<str> + 'a>(
    assigned: impl IntoIterator<Item = (S, &'a EvaluationUnit)>,
) -> Vec<CommunitySentiment> {
    let mut groups: BTreeMap<String, Vec<&EvaluationUnit>> = BTreeMap::new();
    for (c, u) in assigned {
        groups.entry(c.as_ref().to_string()).or_default().push(u);
    }
    groups.iter().map(|(c, us)| community_sentiment(c, us.iter().copied())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityScore {
    pub community_id: String,
    pub total: f64,
    /// `W_i · |S_i + 3|` for every weighted indicator.
    pub contributions: BTreeMap<IndicatorId, f64>,
    pub mentioned: BTreeSet<IndicatorId>,
    /// Mentioned indicators over all indicators.
    pub coverage: f64,
}

/// Weighted total on the 1 to 5 scale.
///
/// Computed as `3 + Σ W_i (|S_i+3| - 3) / Σ W_i`, which equals the plain sum
/// when the weights sum to one and keeps the neutral and endpoint values exact.
pub fn total_score(sentiment: &CommunitySentiment, weights: &WeightTable) -> CommunityScore {
    let mut contributions = BTreeMap::new();
    let mut mass = 0.0;
    let mut offset = 0.0;
    for (id, w) in weights.iter() {
        let s = sentiment.means.get(&id).copied().unwrap_or(0.0);
        let lifted = (s + 3.0).abs();
        contributions.insert(id, w * lifted);
        mass += w;
        offset += w * (lifted - 3.0);
    }
    let total = if mass > 0.0 { (3.0 + offset / mass).clamp(1.0, 5.0) } else { 3.0 };
    let mentioned: BTreeSet<IndicatorId> = sentiment.mentioned().collect();
    let coverage = if weights.is_empty() { 0.0 } else { mentioned.len() as f64 / weights.len() as f64 };
    CommunityScore { community_id: sentiment.community_id.clone(), total, contributions, mentioned, coverage }
}

/// Scores as CSV `community_id,total,coverage`.
pub fn scores_to_csv(scores: &[CommunityScore]) -> String {
    let mut out = String::from("community_id,total,coverage\n");
    for s in scores {
        out.push_str(&format!("{},{},{}\n", csv_field(&s.community_id), s.total, s.coverage));
    }
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryPerformance {
    pub category_id: u32,
    pub name: String,
    /// Mean over covered communities of the category's weighted sub-score (1 to 5).
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySummary {
    pub mean_total: f64,
    pub min_total: f64,
    pub max_total: f64,
    /// 10th through 90th percentiles, linearly interpolated.
    pub deciles: Vec<f64>,
    /// Best category first.
    pub category_ranking: Vec<CategoryPerformance>,
    pub covered_communities: usize,
    pub total_communities: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("no covered communities to summarize")]
    EmptyInput,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Citywide summary over communities with at least one mentioned indicator.
///
/// A category's sub-score for a community is `Σ_{i∈c} W_i|S_i+3| / Σ_{i∈c} W_i`;
/// categories without weight mass are left out of the ranking.
pub fn city_summary(
    scores: &[CommunityScore],
    weights: &WeightTable,
    taxonomy: &Taxonomy,
    total_communities: usize,
) -> Result<CitySummary, ScoringError> {
    let covered: Vec<&CommunityScore> = scores.iter().filter(|s| !s.mentioned.is_empty()).collect();
    if covered.is_empty() {
        return Err(ScoringError::EmptyInput);
    }
    let n = covered.len() as f64;
    let mut totals: Vec<f64> = covered.iter().map(|s| s.total).collect();
    totals.sort_by(f64::total_cmp);
    let mean_total = totals.iter().sum::<f64>() / n;

    let mut category_ranking = Vec::new();
    for (cat, ids) in taxonomy.indicators_by_category() {
        let mass: f64 = ids.iter().filter_map(|id| weights.weight(*id)).sum();
        if mass <= 0.0 {
            continue;
        }
        let sum: f64 = covered
            .iter()
            .map(|s| ids.iter().filter_map(|id| s.contributions.get(id)).sum::<f64>() / mass)
            .sum();
        let name = taxonomy.category(cat).map(|c| c.name.clone()).unwrap_or_default();
        category_ranking.push(CategoryPerformance { category_id: cat, name, mean_score: sum / n });
    }
    category_ranking.sort_by(|a, b| b.mean_score.total_cmp(&a.mean_score).then(a.category_id.cmp(&b.category_id)));

    Ok(CitySummary {
        mean_total,
        min_total: totals[0],
        max_total: totals[totals.len() - 1],
        deciles: (1..=9).map(|k| percentile(&totals, k as f64 / 10.0)).collect(),
        category_ranking,
        covered_communities: covered.len(),
        total_communities: total_communities.max(covered.len()),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::SentimentScore;
    use crate::weights::{compute_weights, indicator_stats, WeightConfig, WeightRow};

    fn id(s: &str) -> IndicatorId {
        s.parse().unwrap()
    }

    fn unit(indicator: &str, s: i64) -> EvaluationUnit {
        EvaluationUnit {
            entry_id: "e".into(),
            object_text: "o".into(),
            content_text: "c".into(),
            indicator_id: id(indicator),
            sentiment: SentimentScore::new(s).unwrap(),
        }
    }

    fn table(ws: &[(&str, f64)]) -> WeightTable {
        WeightTable::from_rows(
            ws.iter()
                .map(|(i, w)| WeightRow { indicator_id: id(i), frequency: 1, log_frequency: 0.0, importance: 0.0, weight: *w })
                .collect(),
        )
    }

    fn uniform46() -> WeightTable {
        let t = Taxonomy::shipped_default();
        let n = t.len() as f64;
        WeightTable::from_rows(
            t.indicator_ids()
                .map(|i| WeightRow { indicator_id: i, frequency: 1, log_frequency: 0.0, importance: 0.0, weight: 1.0 / n })
                .collect(),
        )
    }

    #[test]
    fn sentiment_means() {
        let units = [unit("4.1", 2), unit("4.1", 0), unit("6.2", -2)];
        let cs = community_sentiment("c1", &units);
        assert_eq!(cs.means[&id("4.1")], 1.0);
        assert_eq!(cs.means[&id("6.2")], -2.0);
        assert!(!cs.means.contains_key(&id("1.3")));
        assert_eq!(cs.unit_count(), 3);
    }

    #[test]
    fn grouping_sorts_by_community() {
        let a = unit("1.1", 1);
        let b = unit("1.1", -1);
        let groups = community_sentiments([("z", &a), ("a", &b), ("z", &b)]);
        assert_eq!(groups.iter().map(|g| g.community_id.as_str()).collect::<Vec<_>>(), ["a", "z"]);
        assert_eq!(groups[1].means[&id("1.1")], 0.0);
    }

    #[test]
    fn fixed_points() {
        let w = uniform46();
        let empty = community_sentiment("c", &[]);
        assert_eq!(total_score(&empty, &w).total, 3.0);
        let t = Taxonomy::shipped_default();
        let best: Vec<EvaluationUnit> = t.indicator_ids().map(|i| unit(&i.to_string(), 2)).collect();
        let worst: Vec<EvaluationUnit> = t.indicator_ids().map(|i| unit(&i.to_string(), -2)).collect();
        assert_eq!(total_score(&community_sentiment("c", &best), &w).total, 5.0);
        assert_eq!(total_score(&community_sentiment("c", &worst), &w).total, 1.0);
        assert_eq!(total_score(&community_sentiment("c", &best), &w).coverage, 1.0);
    }

    #[test]
    fn hand_example() {
        let w = table(&[("1.1", 0.6), ("1.2", 0.4)]);
        let units = [unit("1.1", 1), unit("1.2", -2)];
        let score = total_score(&community_sentiment("c", &units), &w);
        assert!((score.total - 2.8).abs() < 1e-12);
        assert!((score.contributions[&id("1.1")] - 2.4).abs() < 1e-12);
        assert!((score.contributions[&id("1.2")] - 0.4).abs() < 1e-12);
    }

    fn covered_score(total: f64) -> CommunityScore {
        CommunityScore {
            community_id: format!("c{total}"),
            total,
            contributions: BTreeMap::new(),
            mentioned: [id("1.1")].into(),
            coverage: 1.0 / 46.0,
        }
    }

    #[test]
    fn city_means() {
        let t = Taxonomy::shipped_default();
        let w = uniform46();
        let s = city_summary(&[covered_score(3.0), covered_score(3.8)], &w, &t, 5).unwrap();
        assert!((s.mean_total - 3.4).abs() < 1e-12);
        assert_eq!((s.covered_communities, s.total_communities), (2, 5));
        let one = city_summary(&[covered_score(4.2)], &w, &t, 1).unwrap();
        assert_eq!(one.mean_total, 4.2);
        assert!(one.deciles.iter().all(|d| *d == 4.2));
        assert_eq!(city_summary(&[], &w, &t, 3), Err(ScoringError::EmptyInput));
        let mut uncovered = covered_score(3.0);
        uncovered.mentioned.clear();
        assert_eq!(city_summary(&[uncovered], &w, &t, 3), Err(ScoringError::EmptyInput));
    }

    #[test]
    fn deciles_interpolate() {
        let sorted: Vec<f64> = (0..11).map(|k| 1.0 + k as f64 * 0.4).collect();
        assert!((percentile(&sorted, 0.5) - 3.0).abs() < 1e-12);
        assert!((percentile(&[1.0, 2.0], 0.5) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn planted_category_ranking() {
        // category 5 best, 4 worst, others in between, over three communities
        let t = Taxonomy::shipped_default();
        let planted: [(u32, i64); 4] = [(5, 2), (1, 1), (8, -1), (4, -2)];
        let mut assigned = Vec::new();
        for c in ["a", "b", "c"] {
            for (cat, s) in planted {
                for i in &t.indicators_by_category()[&cat] {
                    assigned.push((c, unit(&i.to_string(), s)));
                }
            }
        }
        let all_units: Vec<EvaluationUnit> = assigned.iter().map(|(_, u)| u.clone()).collect();
        let w = compute_weights(&indicator_stats(&all_units, &t), &WeightConfig::default()).unwrap();
        let sentiments = community_sentiments(assigned.iter().map(|(c, u)| (*c, u)));
        let scores: Vec<CommunityScore> = sentiments.iter().map(|s| total_score(s, &w)).collect();
        let summary = city_summary(&scores, &w, &t, 3).unwrap();
        let order: Vec<u32> = summary.category_ranking.iter().map(|c| c.category_id).collect();
        assert_eq!(order, [5, 1, 8, 4]);
        assert_eq!(summary.category_ranking[0].name, "Public Facilities and Resources");
        assert_eq!(summary.category_ranking[3].name, "Parking");
        assert!((summary.category_ranking[0].mean_score - 5.0).abs() < 1e-12);
        assert!((summary.category_ranking[3].mean_score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scores_csv() {
        let csv = scores_to_csv(&[covered_score(3.5)]);
        assert!(csv.starts_with("community_id,total,coverage\nc3.5,3.5,"));
        assert_eq!(csv_field("a,b"), "\"a,b\"");
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<Option<f64>>)> {
        (1usize..=46).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..1.0, n),
                proptest::collection::vec(proptest::option::of(-2.0f64..=2.0), n),
            )
        })
    }

    fn build(raw_w: &[f64], s: &[Option<f64>]) -> Option<(WeightTable, CommunitySentiment)> {
        let mass: f64 = raw_w.iter().sum();
        if mass <= 1e-9 {
            return None;
        }
        let ids: Vec<IndicatorId> = Taxonomy::shipped_default().indicator_ids().take(raw_w.len()).collect();
        let w = WeightTable::from_rows(
            ids.iter()
                .zip(raw_w)
                .map(|(i, x)| WeightRow { indicator_id: *i, frequency: 1, log_frequency: 0.0, importance: 0.0, weight: x / mass })
                .collect(),
        );
        let mut means = BTreeMap::new();
        let mut unit_counts = BTreeMap::new();
        for (i, v) in ids.iter().zip(s) {
            if let Some(v) = v {
                means.insert(*i, *v);
                unit_counts.insert(*i, 1);
            }
        }
        Some((w, CommunitySentiment { community_id: "c".into(), means, unit_counts }))
    }

    proptest! {
        #[test]
        fn bounds_and_identity((raw_w, s) in arb_case()) {
            if let Some((w, cs)) = build(&raw_w, &s) {
                let total = total_score(&cs, &w).total;
                prop_assert!((1.0..=5.0).contains(&total));
                let linear: f64 = 3.0 + w.iter().map(|(i, x)| x * cs.means.get(&i).copied().unwrap_or(0.0)).sum::<f64>();
                let literal: f64 = w.iter().map(|(i, x)| x * (cs.means.get(&i).copied().unwrap_or(0.0) + 3.0).abs()).sum();
                prop_assert!((total - linear).abs() < 1e-12);
                prop_assert!((total - literal).abs() < 1e-12);
            }
        }

        #[test]
        fn raising_a_sentiment_never_lowers_total((raw_w, s) in arb_case(), pick in 0usize..46, delta in 0.0f64..4.0) {
            if let Some((w, cs)) = build(&raw_w, &s) {
                let k = pick % raw_w.len();
                let target = w.rows()[k].indicator_id;
                let before = total_score(&cs, &w).total;
                let mut raised = cs.clone();
                let cur = raised.means.get(&target).copied().unwrap_or(0.0);
                raised.means.insert(target, (cur + delta).min(2.0));
                prop_assert!(total_score(&raised, &w).total >= before - 1e-12);
            }
        }
    }
}
