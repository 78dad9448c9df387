//! Shared domain types and the indicator taxonomy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Taxonomy shipped with the crate: 11 categories, 46 indicators.
pub const DEFAULT_TAXONOMY_JSON: &str = include_str!("../data/taxonomy.json");

/// The three source platforms a post can come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatformKind {
    /// Review site (restaurant/venue reviews, e.g. Dianping).
    ReviewSite,
    /// Microblog posts (e.g. Weibo).
    Microblog,
    /// Government message board complaints.
    GovBoard,
}

impl PlatformKind {
    pub const ALL: [PlatformKind; 3] = [Self::ReviewSite, Self::Microblog, Self::GovBoard];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReviewSite => "review_site",
            Self::Microblog => "microblog",
            Self::GovBoard => "gov_board",
        }
    }
}

impl fmt::Display for PlatformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlatformKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "review_site" => Ok(Self::ReviewSite),
            "microblog" => Ok(Self::Microblog),
            "gov_board" => Ok(Self::GovBoard),
            other => Err(format!("unknown platform `{other}`")),
        }
    }
}

/// Platform of origin plus a free-form source label (e.g. "dianping").
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Platform {
    pub kind: PlatformKind,
    pub label: String,
}

impl Platform {
    pub fn new(kind: PlatformKind, label: impl Into<String>) -> Self {
        Self { kind, label: label.into() }
    }
}

impl From<PlatformKind> for Platform {
    fn from(kind: PlatformKind) -> Self {
        Self::new(kind, kind.as_str())
    }
}

/// Location information attached to a post, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeoHint {
    Coordinate { lat: f64, lon: f64 },
    CommunityName { name: String },
    None,
}

impl GeoHint {
    pub fn is_valid(&self) -> bool {
        match self {
            GeoHint::Coordinate { lat, lon } => valid_coordinate(*lat, *lon),
            GeoHint::CommunityName { name } => !name.trim().is_empty(),
            GeoHint::None => true,
        }
    }
}

/// WGS-84 range check.
pub fn valid_coordinate(lat: f64, lon: f64) -> bool {
    (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

/// One normalized user-generated post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub id: String,
    pub platform: Platform,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub geo_hint: GeoHint,
}

/// Five-point sentiment, strongly negative (-2) to strongly positive (2).
///
/// Deserialization does not range-check so that out-of-range values read
/// from external files can be reported by [`validate_unit`] with context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentimentScore(i8);

impl SentimentScore {
    pub const MIN: i8 = -2;
    pub const MAX: i8 = 2;
    pub const NEUTRAL: SentimentScore = SentimentScore(0);

    pub fn new(value: i64) -> Result<Self, SentimentOutOfRange> {
        if (Self::MIN as i64..=Self::MAX as i64).contains(&value) {
            Ok(Self(value as i8))
        } else {
            Err(SentimentOutOfRange(value))
        }
    }

    /// Builds a score without the range check.
    pub const fn unchecked(value: i8) -> Self {
        Self(value)
    }

    pub const fn value(self) -> i8 {
        self.0
    }

    pub fn is_valid(self) -> bool {
        (Self::MIN..=Self::MAX).contains(&self.0)
    }

    /// All valid scores in ascending order.
    pub fn all() -> impl Iterator<Item = SentimentScore> {
        (Self::MIN..=Self::MAX).map(SentimentScore)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("sentiment {0} outside [-2, 2]")]
pub struct SentimentOutOfRange(pub i64);

/// Indicator identifier, rendered in dotted `category.indicator` form ("4.1").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndicatorId {
    pub category: u32,
    pub indicator: u32,
}

impl IndicatorId {
    pub fn new(category: u32, indicator: u32) -> Result<Self, ParseIndicatorIdError> {
        if category == 0 || indicator == 0 {
            return Err(ParseIndicatorIdError(format!("{category}.{indicator}")));
        }
        Ok(Self { category, indicator })
    }
}

impl fmt::Display for IndicatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.category, self.indicator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid indicator id `{0}` (expected `<category>.<indicator>`, both >= 1)")]
pub struct ParseIndicatorIdError(pub String);

impl FromStr for IndicatorId {
    type Err = ParseIndicatorIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseIndicatorIdError(s.to_string());
        let (c, i) = s.split_once('.').ok_or_else(err)?;
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()) && !p.starts_with('0');
        if !digits(c) || !digits(i) {
            return Err(err());
        }
        let category = c.parse().map_err(|_| err())?;
        let indicator = i.parse().map_err(|_| err())?;
        Self::new(category, indicator).map_err(|_| err())
    }
}

impl Serialize for IndicatorId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IndicatorId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One structured (object, content, indicator, sentiment) tuple extracted from an entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvaluationUnit {
    #[serde(default)]
    pub entry_id: String,
    #[serde(rename = "object")]
    pub object_text: String,
    #[serde(rename = "content")]
    pub content_text: String,
    #[serde(rename = "indicator")]
    pub indicator_id: IndicatorId,
    pub sentiment: SentimentScore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_local: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub id: IndicatorId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_local: Option<String>,
    /// Owning category; defaults to the id's category part.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<u32>,
    #[serde(default)]
    pub keywords: Vec<String>,
}

impl Indicator {
    pub fn category_id(&self) -> u32 {
        self.category.unwrap_or(self.id.category)
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("failed to read taxonomy file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed taxonomy document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("taxonomy has no {0}")]
    Empty(&'static str),
    #[error("duplicate category id {0}")]
    DuplicateCategory(u32),
    #[error("category id 0 is not allowed")]
    ZeroCategory,
    #[error("duplicate indicator id {0}")]
    DuplicateIndicator(IndicatorId),
    #[error("indicator {indicator} references missing category {category}")]
    DanglingCategory { indicator: IndicatorId, category: u32 },
    #[error("indicator {indicator} declares category {declared} but its id belongs to category {}", indicator.category)]
    CategoryMismatch { indicator: IndicatorId, declared: u32 },
    #[error("indicator {0} has an empty keyword list")]
    EmptyKeywords(IndicatorId),
}

/// The category/indicator schema. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Taxonomy {
    categories: Vec<Category>,
    indicators: Vec<Indicator>,
}

#[derive(Deserialize)]
struct TaxonomyDocument {
    categories: Vec<Category>,
    indicators: Vec<Indicator>,
}

impl Taxonomy {
    /// Validates and builds a taxonomy. Indicators are kept sorted by id.
    pub fn new(categories: Vec<Category>, mut indicators: Vec<Indicator>) -> Result<Self, TaxonomyError> {
        if categories.is_empty() {
            return Err(TaxonomyError::Empty("categories"));
        }
        if indicators.is_empty() {
            return Err(TaxonomyError::Empty("indicators"));
        }
        let mut category_ids = BTreeSet::new();
        for c in &categories {
            if c.id == 0 {
                return Err(TaxonomyError::ZeroCategory);
            }
            if !category_ids.insert(c.id) {
                return Err(TaxonomyError::DuplicateCategory(c.id));
            }
        }
        let mut seen = BTreeSet::new();
        for ind in &indicators {
            if !seen.insert(ind.id) {
                return Err(TaxonomyError::DuplicateIndicator(ind.id));
            }
            let declared = ind.category_id();
            if !category_ids.contains(&declared) {
                return Err(TaxonomyError::DanglingCategory { indicator: ind.id, category: declared });
            }
            if declared != ind.id.category {
                return Err(TaxonomyError::CategoryMismatch { indicator: ind.id, declared });
            }
            if ind.keywords.iter().all(|k| k.trim().is_empty()) {
                return Err(TaxonomyError::EmptyKeywords(ind.id));
            }
        }
        let mut categories = categories;
        categories.sort_by_key(|c| c.id);
        indicators.sort_by_key(|i| i.id);
        Ok(Self { categories, indicators })
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDocument = serde_json::from_str(text)?;
        Self::new(doc.categories, doc.indicators)
    }

    /// The taxonomy bundled with the crate.
    pub fn shipped_default() -> Self {
        Self::from_json(DEFAULT_TAXONOMY_JSON).expect("bundled taxonomy is valid")
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    /// Indicators sorted by id.
    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    pub fn indicator_ids(&self) -> impl Iterator<Item = IndicatorId> + '_ {
        self.indicators.iter().map(|i| i.id)
    }

    pub fn indicator(&self, id: IndicatorId) -> Option<&Indicator> {
        self.indicators.binary_search_by_key(&id, |i| i.id).ok().map(|ix| &self.indicators[ix])
    }

    pub fn contains(&self, id: IndicatorId) -> bool {
        self.indicator(id).is_some()
    }

    pub fn category(&self, id: u32) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    /// Indicator ids grouped by category id.
    pub fn indicators_by_category(&self) -> BTreeMap<u32, Vec<IndicatorId>> {
        let mut out: BTreeMap<u32, Vec<IndicatorId>> =
            self.categories.iter().map(|c| (c.id, Vec::new())).collect();
        for ind in &self.indicators {
            out.entry(ind.category_id()).or_default().push(ind.id);
        }
        out
    }

    /// Serializes back to the documented file format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serializes")
    }
}

/// Loads and validates a taxonomy file (JSON with `categories` and `indicators`).
pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy, TaxonomyError> {
    let text = std::fs::read_to_string(path)?;
    Taxonomy::from_json(&text)
}

/// A broken invariant on an [`EvaluationUnit`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnitViolation {
    SentimentOutOfRange { value: i8 },
    UnknownIndicator { indicator: IndicatorId },
    EmptyObject,
    EmptyContent,
}

impl fmt::Display for UnitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SentimentOutOfRange { value } => write!(f, "sentiment out of range ({value})"),
            Self::UnknownIndicator { indicator } => write!(f, "unknown indicator {indicator}"),
            Self::EmptyObject => f.write_str("empty object text"),
            Self::EmptyContent => f.write_str("empty content text"),
        }
    }
}

/// Returns every invariant the unit breaks against `taxonomy`; empty means valid.
pub fn validate_unit(unit: &EvaluationUnit, taxonomy: &Taxonomy) -> Vec<UnitViolation> {
    let mut out = Vec::new();
    if !unit.sentiment.is_valid() {
        out.push(UnitViolation::SentimentOutOfRange { value: unit.sentiment.value() });
    }
    if !taxonomy.contains(unit.indicator_id) {
        out.push(UnitViolation::UnknownIndicator { indicator: unit.indicator_id });
    }
    if unit.object_text.trim().is_empty() {
        out.push(UnitViolation::EmptyObject);
    }
    if unit.content_text.trim().is_empty() {
        out.push(UnitViolation::EmptyContent);
    }
    out
}

/// A closed ring stored without the repeated closing vertex, as (lat, lon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring(pub Vec<(f64, f64)>);

impl Ring {
    /// Drops a repeated closing vertex. Requires at least three distinct vertices.
    pub fn new(mut vertices: Vec<(f64, f64)>) -> Option<Self> {
        if vertices.len() >= 2 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        (vertices.len() >= 3).then_some(Self(vertices))
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.0
    }

    /// Unsigned shoelace area in squared degrees.
    pub fn area(&self) -> f64 {
        let v = &self.0;
        let n = v.len();
        let mut twice = 0.0;
        for k in 0..n {
            let (y0, x0) = v[k];
            let (y1, x1) = v[(k + 1) % n];
            twice += x0 * y1 - x1 * y0;
        }
        (twice / 2.0).abs()
    }
}

/// One polygon: an exterior ring with optional holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Ring,
    #[serde(default)]
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(Ring::area).sum();
        (self.exterior.area() - holes).max(0.0)
    }
}

/// A residential community (AOI) with one or more boundary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: String,
    pub name: String,
    pub parts: Vec<Polygon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<(f64, f64)>,
}

impl Community {
    pub fn area(&self) -> f64 {
        self.parts.iter().map(Polygon::area).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(indicator: &str, sentiment: i8) -> EvaluationUnit {
        EvaluationUnit {
            entry_id: "e1".into(),
            object_text: "parking".into(),
            content_text: "parking is hard".into(),
            indicator_id: indicator.parse().unwrap(),
            sentiment: SentimentScore::unchecked(sentiment),
        }
    }

    #[test]
    fn shipped_taxonomy_has_11_categories_46_indicators() {
        let t = Taxonomy::shipped_default();
        assert_eq!(t.categories().len(), 11);
        assert_eq!(t.len(), 46);
        assert!(t.indicators().iter().all(|i| !i.keywords.is_empty()));
        let named: IndicatorId = "4.1".parse().unwrap();
        assert_eq!(t.indicator(named).unwrap().name, "Quantity and coverage of parking spaces");
        assert_eq!(t.indicator("10.4".parse().unwrap()).unwrap().name, "Accessible Parking Spaces");
    }

    #[test]
    fn minimal_taxonomy() {
        let t = Taxonomy::from_json(
            r#"{"categories":[{"id":1,"name":"A"}],
                "indicators":[{"id":"1.1","name":"a","keywords":["x"]}]}"#,
        )
        .unwrap();
        assert_eq!((t.categories().len(), t.len()), (1, 1));
    }

    #[test]
    fn dangling_category_names_indicator() {
        let err = Taxonomy::from_json(
            r#"{"categories":[{"id":4,"name":"Parking"}],
                "indicators":[{"id":"4.1","name":"a","category":9,"keywords":["x"]}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, TaxonomyError::DanglingCategory { category: 9, .. }));
        assert!(err.to_string().contains("4.1"), "{err}");
    }

    #[test]
    fn validation_errors_name_the_offender() {
        let dup = Taxonomy::from_json(
            r#"{"categories":[{"id":1,"name":"A"}],
                "indicators":[{"id":"1.1","name":"a","keywords":["x"]},
                              {"id":"1.1","name":"b","keywords":["y"]}]}"#,
        )
        .unwrap_err();
        assert!(dup.to_string().contains("1.1"));
        let empty = Taxonomy::from_json(
            r#"{"categories":[{"id":1,"name":"A"}],
                "indicators":[{"id":"1.2","name":"a","keywords":[]}]}"#,
        )
        .unwrap_err();
        assert!(matches!(empty, TaxonomyError::EmptyKeywords(_)));
        assert!(empty.to_string().contains("1.2"));
        let missing_cat = Taxonomy::from_json(
            r#"{"categories":[{"id":1,"name":"A"}],
                "indicators":[{"id":"3.1","name":"a","keywords":["k"]}]}"#,
        )
        .unwrap_err();
        assert!(missing_cat.to_string().contains("3.1"));
        assert!(matches!(Taxonomy::from_json("{"), Err(TaxonomyError::Parse(_))));
    }

    #[test]
    fn load_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        std::fs::write(&path, DEFAULT_TAXONOMY_JSON).unwrap();
        assert_eq!(load_taxonomy(&path).unwrap(), load_taxonomy(&path).unwrap());
        assert_eq!(Taxonomy::from_json(&Taxonomy::shipped_default().to_json()).unwrap(), Taxonomy::shipped_default());
    }

    #[test]
    fn indicator_id_parsing() {
        assert_eq!("4.1".parse::<IndicatorId>().unwrap(), IndicatorId { category: 4, indicator: 1 });
        for bad in ["", "4", "4.", ".1", "0.1", "1.0", "a.b", "4.1.2", "-1.2", "04.1", " 4.1"] {
            assert!(bad.parse::<IndicatorId>().is_err(), "{bad}");
        }
        let mut ids: Vec<IndicatorId> = ["2.1", "1.10", "1.2", "10.1"].iter().map(|s| s.parse().unwrap()).collect();
        ids.sort();
        let rendered: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        assert_eq!(rendered, ["1.2", "1.10", "2.1", "10.1"]);
    }

    #[test]
    fn validate_unit_examples() {
        let t = Taxonomy::shipped_default();
        assert!(validate_unit(&unit("4.1", 2), &t).is_empty());
        let v = validate_unit(&unit("4.1", 3), &t);
        assert_eq!(v, vec![UnitViolation::SentimentOutOfRange { value: 3 }]);
        assert!(v[0].to_string().contains("sentiment out of range"));
        let v = validate_unit(&unit("12.9", 0), &t);
        assert_eq!(v, vec![UnitViolation::UnknownIndicator { indicator: "12.9".parse().unwrap() }]);
        assert!(v[0].to_string().contains("unknown indicator"));
        let mut u = unit("4.1", 0);
        u.object_text = " ".into();
        u.content_text.clear();
        assert_eq!(validate_unit(&u, &t), vec![UnitViolation::EmptyObject, UnitViolation::EmptyContent]);
    }

    #[test]
    fn ring_drops_closing_vertex() {
        let r = Ring::new(vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (0.0, 0.0)]).unwrap();
        assert_eq!(r.vertices().len(), 4);
        assert_eq!(r.area(), 1.0);
        assert!(Ring::new(vec![(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)]).is_none());
    }

    proptest::proptest! {
        #[test]
        fn indicator_id_round_trips(c in 1u32..=99, i in 1u32..=99) {
            let id = IndicatorId::new(c, i).unwrap();
            proptest::prop_assert_eq!(id.to_string().parse::<IndicatorId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            proptest::prop_assert_eq!(serde_json::from_str::<IndicatorId>(&json).unwrap(), id);
        }

        #[test]
        fn validate_unit_matches_independent_checks(
            c in 1u32..=13, i in 1u32..=7, s in -4i8..=4,
            object in "[a-z ]{0,4}", content in "[a-z ]{0,4}",
        ) {
            let t = Taxonomy::shipped_default();
            let u = EvaluationUnit {
                entry_id: "e".into(),
                object_text: object.clone(),
                content_text: content.clone(),
                indicator_id: IndicatorId::new(c, i).unwrap(),
                sentiment: SentimentScore::unchecked(s),
            };
            let known = t.indicators().iter().any(|x| x.id.category == c && x.id.indicator == i);
            let expect_ok = (-2..=2).contains(&s) && known && !object.trim().is_empty() && !content.trim().is_empty();
            proptest::prop_assert_eq!(validate_unit(&u, &t).is_empty(), expect_ok);
        }
    }
}
