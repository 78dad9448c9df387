//! Mapping entries to residential communities.
//!
//! Coordinates are resolved by point-in-polygon against AOI boundaries;
//! entries without coordinates fall back to community-name and POI-name
//! matching. Geometry is planar in (lat, lon).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{Community, Entry, GeoHint, Polygon, Ring};

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid GeoJSON: {0}")]
    Parse(String),
    #[error("feature {feature}: geometry type {kind} is not a polygon")]
    NotPolygon { feature: String, kind: String },
    #[error("feature {feature}: {detail}")]
    BadFeature { feature: String, detail: String },
    #[error("POI file {path}: {detail}")]
    Poi { path: PathBuf, detail: String },
    #[error("invalid match policy: {0}")]
    Policy(String),
}

fn ring_from_json(value: &Value, feature: &str) -> Result<Ring, GeoError> {
    let bad = |detail: &str| GeoError::BadFeature { feature: feature.to_string(), detail: detail.to_string() };
    let points = value.as_array().ok_or_else(|| bad("ring is not an array"))?;
    let mut vertices = Vec::with_capacity(points.len());
    for p in points {
        let pair = p.as_array().filter(|a| a.len() >= 2).ok_or_else(|| bad("position needs [lon, lat]"))?;
        let lon = pair[0].as_f64().ok_or_else(|| bad("non-numeric longitude"))?;
        let lat = pair[1].as_f64().ok_or_else(|| bad("non-numeric latitude"))?;
        vertices.push((lat, lon));
    }
    Ring::new(vertices).ok_or_else(|| bad("ring has fewer than 3 distinct vertices"))
}

fn polygon_from_json(value: &Value, feature: &str) -> Result<Polygon, GeoError> {
    let rings = value.as_array().filter(|r| !r.is_empty()).ok_or_else(|| GeoError::BadFeature {
        feature: feature.to_string(),
        detail: "polygon has no rings".into(),
    })?;
    let exterior = ring_from_json(&rings[0], feature)?;
    let holes = rings[1..].iter().map(|r| ring_from_json(r, feature)).collect::<Result<_, _>>()?;
    Ok(Polygon { exterior, holes })
}

fn feature_label(feature: &Value, index: usize) -> String {
    let props = &feature["properties"];
    for v in [&feature["id"], &props["id"], &props["name"]] {
        match v {
            Value::String(s) => return s.clone(),
            Value::Number(n) => return n.to_string(),
            _ => {}
        }
    }
    format!("#{index}")
}

/// Parses a FeatureCollection of Polygon / MultiPolygon features.
///
/// Each feature needs a `name` property; its id is the feature `id`, a
/// `properties.id`, or else the name. Parts of a MultiPolygon share one id.
pub fn parse_communities(text: &str) -> Result<Vec<Community>, GeoError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| GeoError::Parse(e.to_string()))?;
    if doc["type"] != "FeatureCollection" {
        return Err(GeoError::Parse("top-level object is not a FeatureCollection".into()));
    }
    let features = doc["features"].as_array().ok_or_else(|| GeoError::Parse("missing features array".into()))?;
    let mut out = Vec::with_capacity(features.len());
    let mut seen = BTreeSet::new();
    for (index, f) in features.iter().enumerate() {
        let label = feature_label(f, index);
        let geometry = &f["geometry"];
        let kind = geometry["type"].as_str().unwrap_or("null").to_string();
        let coords = &geometry["coordinates"];
        let parts = match kind.as_str() {
            "Polygon" => vec![polygon_from_json(coords, &label)?],
            "MultiPolygon" => coords
                .as_array()
                .ok_or_else(|| GeoError::BadFeature { feature: label.clone(), detail: "coordinates not an array".into() })?
                .iter()
                .map(|p| polygon_from_json(p, &label))
                .collect::<Result<Vec<_>, _>>()?,
            _ => return Err(GeoError::NotPolygon { feature: label, kind }),
        };
        let props = &f["properties"];
        let name = props["name"]
            .as_str()
            .ok_or_else(|| GeoError::BadFeature { feature: label.clone(), detail: "missing name property".into() })?
            .to_string();
        let id = match (&f["id"], &props["id"]) {
            (Value::String(s), _) | (_, Value::String(s)) => s.clone(),
            (Value::Number(n), _) | (_, Value::Number(n)) => n.to_string(),
            _ => name.clone(),
        };
        if !seen.insert(id.clone()) {
            return Err(GeoError::BadFeature { feature: label, detail: format!("duplicate community id {id}") });
        }
        let centroid = match (props["centroid_lat"].as_f64(), props["centroid_lon"].as_f64()) {
            (Some(lat), Some(lon)) => Some((lat, lon)),
            _ => None,
        };
        out.push(Community { id, name, parts, centroid });
    }
    Ok(out)
}

pub fn load_communities(path: &Path) -> Result<Vec<Community>, GeoError> {
    let text = std::fs::read_to_string(path).map_err(|source| GeoError::Io { path: path.to_path_buf(), source })?;
    parse_communities(&text)
}

const BOUNDARY_EPS: f64 = 1e-12;

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    if cross.abs() > BOUNDARY_EPS * len.max(1.0) {
        return false;
    }
    let within = |v: f64, x: f64, y: f64| v >= x.min(y) - BOUNDARY_EPS && v <= x.max(y) + BOUNDARY_EPS;
    within(p.0, a.0, b.0) && within(p.1, a.1, b.1)
}

fn edges(ring: &Ring) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
    let v = ring.vertices();
    (0..v.len()).map(move |i| (v[i], v[(i + 1) % v.len()]))
}

/// Whether `p` lies on an edge of `ring`.
pub fn on_ring_boundary(p: (f64, f64), ring: &Ring) -> bool {
    edges(ring).any(|(a, b)| on_segment(p, a, b))
}

/// Even-odd ray casting; boundary points are not special-cased here.
fn ray_cast(p: (f64, f64), ring: &Ring) -> bool {
    let (y, x) = p;
    let mut inside = false;
    for ((ay, ax), (by, bx)) in edges(ring) {
        if (ay > y) != (by > y) {
            let cross_x = ax + (y - ay) * (bx - ax) / (by - ay);
            if x < cross_x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Point-in-polygon with holes; points on any boundary count as inside.
pub fn point_in_polygon(p: (f64, f64), polygon: &Polygon) -> bool {
    if on_ring_boundary(p, &polygon.exterior) || polygon.holes.iter().any(|h| on_ring_boundary(p, h)) {
        return true;
    }
    ray_cast(p, &polygon.exterior) && !polygon.holes.iter().any(|h| ray_cast(p, h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BBox {
    min: (f64, f64),
    max: (f64, f64),
}

impl BBox {
    fn of(c: &Community) -> Self {
        let mut min = (f64::INFINITY, f64::INFINITY);
        let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for part in &c.parts {
            for &(lat, lon) in part.exterior.vertices() {
                min = (min.0.min(lat), min.1.min(lon));
                max = (max.0.max(lat), max.1.max(lon));
            }
        }
        Self { min, max }
    }

    fn contains(&self, p: (f64, f64)) -> bool {
        let e = BOUNDARY_EPS;
        p.0 >= self.min.0 - e && p.0 <= self.max.0 + e && p.1 >= self.min.1 - e && p.1 <= self.max.1 + e
    }
}

/// Read-only community lookup with bounding-box prefiltering.
#[derive(Debug, Clone)]
pub struct CommunityIndex {
    communities: Vec<Community>,
    boxes: Vec<BBox>,
    areas: Vec<f64>,
}

impl CommunityIndex {
    pub fn new(mut communities: Vec<Community>) -> Self {
        communities.sort_by(|a, b| a.id.cmp(&b.id));
        let boxes = communities.iter().map(BBox::of).collect();
        let areas = communities.iter().map(Community::area).collect();
        Self { communities, boxes, areas }
    }

    pub fn communities(&self) -> &[Community] {
        &self.communities
    }

    pub fn get(&self, id: &str) -> Option<&Community> {
        self.communities.binary_search_by(|c| c.id.as_str().cmp(id)).ok().map(|i| &self.communities[i])
    }

    /// Smallest-area community containing `(lat, lon)`; ties go to the smaller id.
    pub fn locate(&self, lat: f64, lon: f64) -> Option<&Community> {
        let p = (lat, lon);
        let mut best: Option<usize> = None;
        for (i, c) in self.communities.iter().enumerate() {
            if !self.boxes[i].contains(p) || !c.parts.iter().any(|part| point_in_polygon(p, part)) {
                continue;
            }
            // communities are id-sorted, so strict < keeps the smaller id on ties
            if best.is_none_or(|b| self.areas[i] < self.areas[b]) {
                best = Some(i);
            }
        }
        best.map(|i| &self.communities[i])
    }
}

/// Id of the smallest-area community containing `point` (lat, lon).
pub fn point_in_community(point: (f64, f64), communities: &[Community]) -> Option<String> {
    let mut best: Option<(&Community, f64)> = None;
    for c in communities {
        if !c.parts.iter().any(|part| point_in_polygon(point, part)) {
            continue;
        }
        let area = c.area();
        let better = match best {
            None => true,
            Some((b, a)) => area < a || (area == a && c.id < b.id),
        };
        if better {
            best = Some((c, area));
        }
    }
    best.map(|(c, _)| c.id.clone())
}

pub const DEFAULT_GENERIC_SUFFIXES: &[&str] = &[
    "小区", "社区", "家园", "公寓", "花园", "community", "residential", "estate", "apartments", "compound", "garden", "gardens",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchPolicy {
    /// Maximum normalized edit distance for a fuzzy match.
    pub fuzzy_threshold: f64,
    /// Stripped from the end of normalized names, repeatedly.
    pub generic_suffixes: Vec<String>,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self { fuzzy_threshold: 0.2, generic_suffixes: DEFAULT_GENERIC_SUFFIXES.iter().map(|s| s.to_string()).collect() }
    }
}

impl MatchPolicy {
    pub fn validate(&self) -> Result<(), GeoError> {
        if !(0.0..=1.0).contains(&self.fuzzy_threshold) {
            return Err(GeoError::Policy(format!("fuzzy_threshold must be in [0, 1], got {}", self.fuzzy_threshold)));
        }
        Ok(())
    }

    /// Lowercases, drops non-alphanumeric characters and strips generic suffixes.
    ///
    /// A suffix is kept if removing it would leave nothing.
    pub fn normalize(&self, name: &str) -> String {
        let mut s: String = name.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        let suffixes: Vec<String> = self
            .generic_suffixes
            .iter()
            .map(|x| x.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
            .filter(|x| !x.is_empty())
            .collect();
        loop {
            let hit = suffixes.iter().find(|x| s.len() > x.len() && s.ends_with(x.as_str()));
            match hit {
                Some(x) => s.truncate(s.len() - x.len()),
                None => return s,
            }
        }
    }
}

/// Levenshtein distance in characters divided by the longer length.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Best match among `(name, id)` candidates: exact normalized match first,
/// then the closest fuzzy match within the threshold; ties go to the smaller id.
pub fn best_name_match<'a>(
    name: &str,
    candidates: impl IntoIterator<Item = (&'a str, &'a str)>,
    policy: &MatchPolicy,
) -> Option<&'a str> {
    let query = policy.normalize(name);
    if query.is_empty() {
        return None;
    }
    let mut exact: Option<&str> = None;
    let mut fuzzy: Option<(f64, &str)> = None;
    for (cand_name, id) in candidates {
        let cand = policy.normalize(cand_name);
        if cand == query {
            if exact.is_none_or(|e| id < e) {
                exact = Some(id);
            }
            continue;
        }
        let d = normalized_edit_distance(&query, &cand);
        if d > policy.fuzzy_threshold {
            continue;
        }
        let better = match fuzzy {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && id < bid),
        };
        if better {
            fuzzy = Some((d, id));
        }
    }
    exact.or(fuzzy.map(|(_, id)| id))
}

pub fn match_name(name: &str, communities: &[Community], policy: &MatchPolicy) -> Option<String> {
    best_name_match(name, communities.iter().map(|c| (c.name.as_str(), c.id.as_str())), policy).map(str::to_string)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub community_id: Option<String>,
}

#[derive(Deserialize)]
struct PoiRow {
    name: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    community_id: Option<String>,
}

/// Reads a POI CSV with columns `name,lat,lon[,community_id]`.
pub fn load_pois(path: &Path) -> Result<Vec<PoiRecord>, GeoError> {
    let err = |detail: String| GeoError::Poi { path: path.to_path_buf(), detail };
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<PoiRow>().enumerate() {
        let row = row.map_err(|e| err(format!("row {}: {e}", i + 2)))?;
        if !crate::model::valid_coordinate(row.lat, row.lon) {
            return Err(err(format!("row {}: invalid coordinate ({}, {})", i + 2, row.lat, row.lon)));
        }
        let community_id = row.community_id.filter(|c| !c.trim().is_empty());
        out.push(PoiRecord { name: row.name, lat: row.lat, lon: row.lon, community_id });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMethod {
    Polygon,
    CommunityName,
    PoiName,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub entry_id: String,
    pub community_id: Option<String>,
    pub method: AssignmentMethod,
}

/// Resolution cascade: polygon for coordinates, else community name, else POI name.
#[derive(Debug, Clone)]
pub struct Resolver {
    index: CommunityIndex,
    pois: Vec<PoiRecord>,
    policy: MatchPolicy,
}

impl Resolver {
    /// POIs without a community reference, or referencing an unknown community, are dropped.
    pub fn new(communities: Vec<Community>, pois: Vec<PoiRecord>, policy: MatchPolicy) -> Result<Self, GeoError> {
        policy.validate()?;
        let index = CommunityIndex::new(communities);
        let pois = pois
            .into_iter()
            .filter(|p| p.community_id.as_deref().is_some_and(|c| index.get(c).is_some()))
            .collect();
        Ok(Self { index, pois, policy })
    }

    pub fn index(&self) -> &CommunityIndex {
        &self.index
    }

    pub fn resolve(&self, entry: &Entry) -> Assignment {
        let (community_id, method) = match &entry.geo_hint {
            GeoHint::Coordinate { lat, lon } => match self.index.locate(*lat, *lon) {
                Some(c) => (Some(c.id.clone()), AssignmentMethod::Polygon),
                None => (None, AssignmentMethod::Unassigned),
            },
            GeoHint::CommunityName { name } => self.resolve_name(name),
            GeoHint::None => (None, AssignmentMethod::Unassigned),
        };
        Assignment { entry_id: entry.id.clone(), community_id, method }
    }

    fn resolve_name(&self, name: &str) -> (Option<String>, AssignmentMethod) {
        let communities = self.index.communities().iter().map(|c| (c.name.as_str(), c.id.as_str()));
        if let Some(id) = best_name_match(name, communities, &self.policy) {
            return (Some(id.to_string()), AssignmentMethod::CommunityName);
        }
        let pois = self.pois.iter().filter_map(|p| p.community_id.as_deref().map(|c| (p.name.as_str(), c)));
        match best_name_match(name, pois, &self.policy) {
            Some(id) => (Some(id.to_string()), AssignmentMethod::PoiName),
            None => (None, AssignmentMethod::Unassigned),
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn square(id: &str, lat0: f64, lon0: f64, side: f64) -> Community {
        let ring = Ring::new(vec![(lat0, lon0), (lat0, lon0 + side), (lat0 + side, lon0 + side), (lat0 + side, lon0)]).unwrap();
        Community { id: id.into(), name: id.into(), parts: vec![Polygon { exterior: ring, holes: vec![] }], centroid: None }
    }

    const TWO: &str = r#"{"type":"FeatureCollection","features":[
      {"type":"Feature","id":"c1","properties":{"name":"Sunrise Garden"},
       "geometry":{"type":"Polygon","coordinates":[[[120,30],[121,30],[121,31],[120,31],[120,30]]]}},
      {"type":"Feature","properties":{"id":"c2","name":"Lakeside"},
       "geometry":{"type":"MultiPolygon","coordinates":[[[[0,0],[1,0],[1,1],[0,0]]],[[[5,5],[6,5],[6,6],[5,5]]]]}}
    ]}"#;

    #[test]
    fn loads_polygons_and_multipolygons() {
        let cs = parse_communities(TWO).unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].id, "c1");
        assert_eq!(cs[0].parts[0].exterior.vertices()[1], (30.0, 121.0));
        assert_eq!(cs[1].id, "c2");
        assert_eq!(cs[1].parts.len(), 2);
    }

    #[test]
    fn point_feature_is_named_in_error() {
        let text = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","id":"gate-7","properties":{"name":"Gate"},"geometry":{"type":"Point","coordinates":[1,2]}}]}"#;
        let err = parse_communities(text).unwrap_err();
        assert!(matches!(&err, GeoError::NotPolygon { feature, .. } if feature == "gate-7"));
        assert!(err.to_string().contains("gate-7"));
        assert!(matches!(parse_communities("{"), Err(GeoError::Parse(_))));
    }

    #[test]
    fn missing_name_is_an_error() {
        let text = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","id":"x","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]}"#;
        assert!(matches!(parse_communities(text), Err(GeoError::BadFeature { .. })));
    }

    #[test]
    fn point_lookup() {
        let cs = vec![square("outer", 0.0, 0.0, 10.0), square("inner", 2.0, 2.0, 2.0), square("far", 50.0, 50.0, 1.0)];
        assert_eq!(point_in_community((5.0, 5.0), &cs).as_deref(), Some("outer"));
        assert_eq!(point_in_community((3.0, 3.0), &cs).as_deref(), Some("inner"));
        assert_eq!(point_in_community((-20.0, -20.0), &cs), None);
        let unit = vec![square("u", 0.0, 0.0, 1.0)];
        assert_eq!(point_in_community((0.5, 0.5), &unit).as_deref(), Some("u"));
        // boundary and vertex count as inside
        assert_eq!(point_in_community((0.0, 0.5), &unit).as_deref(), Some("u"));
        assert_eq!(point_in_community((1.0, 1.0), &unit).as_deref(), Some("u"));
        let index = CommunityIndex::new(cs.clone());
        assert_eq!(index.locate(3.0, 3.0).map(|c| c.id.as_str()), Some("inner"));
        assert_eq!(index.locate(1.0, 1.0).map(|c| c.id.as_str()), Some("outer"));
        assert!(index.locate(-20.0, -20.0).is_none());
    }

    #[test]
    fn equal_area_tie_goes_to_smaller_id() {
        let cs = vec![square("b", 0.0, 0.0, 1.0), square("a", 0.0, 0.0, 1.0)];
        assert_eq!(point_in_community((0.5, 0.5), &cs).as_deref(), Some("a"));
        assert_eq!(CommunityIndex::new(cs).locate(0.5, 0.5).map(|c| c.id.as_str()), Some("a"));
    }

    #[test]
    fn holes_exclude_interior_only() {
        let outer = Ring::new(vec![(0.0, 0.0), (0.0, 4.0), (4.0, 4.0), (4.0, 0.0)]).unwrap();
        let hole = Ring::new(vec![(1.0, 1.0), (1.0, 3.0), (3.0, 3.0), (3.0, 1.0)]).unwrap();
        let poly = Polygon { exterior: outer, holes: vec![hole] };
        assert!(!point_in_polygon((2.0, 2.0), &poly));
        assert!(point_in_polygon((0.5, 0.5), &poly));
        assert!(point_in_polygon((1.0, 2.0), &poly));
    }

    fn named(id: &str, name: &str) -> Community {
        Community { name: name.into(), ..square(id, 0.0, 0.0, 1.0) }
    }

    #[test]
    fn name_matching() {
        let p = MatchPolicy::default();
        let cs = vec![named("c1", "Riverside"), named("c2", "Mapleton Heights"), named("c3", "阳光小区")];
        assert_eq!(match_name("  River side  ", &cs, &p).as_deref(), Some("c1"));
        assert_eq!(match_name("Riverside Community", &cs, &p).as_deref(), Some("c1"));
        assert_eq!(match_name("阳光", &cs, &p).as_deref(), Some("c3"));
        assert_eq!(match_name("Completely Different Place", &cs, &p), None);
        assert_eq!(match_name("", &cs, &p), None);
        // one substitution in a ten-character name
        assert_eq!(p.normalize("Abcdefghij"), "abcdefghij");
        assert!((normalized_edit_distance("abcdefghij", "abcdefghiz") - 0.1).abs() < 1e-15);
        let ten = vec![named("t", "Abcdefghij")];
        assert_eq!(match_name("Abcdefghiz", &ten, &p).as_deref(), Some("t"));
        let strict = MatchPolicy { fuzzy_threshold: 0.0, ..MatchPolicy::default() };
        assert_eq!(match_name("Abcdefghiz", &ten, &strict), None);
    }

    #[test]
    fn fuzzy_ties_break_on_id() {
        let p = MatchPolicy::default();
        let cs = vec![named("z", "abcdefghix"), named("m", "abcdefghiy")];
        assert_eq!(match_name("abcdefghij", &cs, &p).as_deref(), Some("m"));
    }

    #[test]
    fn policy_validation() {
        assert!(MatchPolicy { fuzzy_threshold: 1.5, ..MatchPolicy::default() }.validate().is_err());
    }

    fn entry(id: &str, hint: GeoHint) -> Entry {
        Entry {
            id: id.into(),
            platform: crate::model::PlatformKind::ReviewSite.into(),
            timestamp: chrono::DateTime::UNIX_EPOCH,
            text: "text".into(),
            geo_hint: hint,
        }
    }

    #[test]
    fn resolver_cascade() {
        let cs = vec![named("c1", "Riverside"), square("c2", 10.0, 10.0, 1.0)];
        let pois = vec![
            PoiRecord { name: "Riverside North Gate".into(), lat: 0.5, lon: 0.5, community_id: Some("c1".into()) },
            PoiRecord { name: "Orphan Shop".into(), lat: 0.5, lon: 0.5, community_id: None },
        ];
        let r = Resolver::new(cs, pois, MatchPolicy::default()).unwrap();
        let a = r.resolve(&entry("e1", GeoHint::Coordinate { lat: 10.5, lon: 10.5 }));
        assert_eq!((a.community_id.as_deref(), a.method), (Some("c2"), AssignmentMethod::Polygon));
        let a = r.resolve(&entry("e2", GeoHint::CommunityName { name: "riverside".into() }));
        assert_eq!((a.community_id.as_deref(), a.method), (Some("c1"), AssignmentMethod::CommunityName));
        let a = r.resolve(&entry("e3", GeoHint::CommunityName { name: "Riverside North Gate".into() }));
        assert_eq!((a.community_id.as_deref(), a.method), (Some("c1"), AssignmentMethod::PoiName));
        let a = r.resolve(&entry("e4", GeoHint::CommunityName { name: "Orphan Shop".into() }));
        assert_eq!(a.method, AssignmentMethod::Unassigned);
        let a = r.resolve(&entry("e5", GeoHint::Coordinate { lat: -40.0, lon: 0.0 }));
        assert_eq!((a.community_id, a.method), (None, AssignmentMethod::Unassigned));
        assert_eq!(r.resolve(&entry("e6", GeoHint::None)).method, AssignmentMethod::Unassigned);
    }

    #[test]
    fn poi_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poi.csv");
        std::fs::write(&path, "name,lat,lon,community_id\nGate,30.1,120.2,c1\nShop,30.2,120.3,\n").unwrap();
        let pois = load_pois(&path).unwrap();
        assert_eq!(pois.len(), 2);
        assert_eq!(pois[0].community_id.as_deref(), Some("c1"));
        assert_eq!(pois[1].community_id, None);
        std::fs::write(&path, "name,lat,lon\nBad,91,0\n").unwrap();
        assert!(load_pois(&path).is_err());
    }

    fn winding_number(p: (f64, f64), ring: &Ring) -> i32 {
        let v = ring.vertices();
        let mut wn = 0;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            let is_left = (b.1 - a.1) * (p.0 - a.0) - (p.1 - a.1) * (b.0 - a.0);
            if a.0 <= p.0 {
                if b.0 > p.0 && is_left > 0.0 {
                    wn += 1;
                }
            } else if b.0 <= p.0 && is_left < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    /// Vertices on a circle in angular order form a convex polygon.
    fn convex_polygon(radius: f64, mut angles: Vec<f64>) -> Option<Ring> {
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        Ring::new(angles.iter().map(|t| (radius * t.sin(), radius * t.cos())).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn agrees_with_winding_number(
            radius in 0.5f64..5.0,
            angles in proptest::collection::vec(0.0f64..std::f64::consts::TAU, 3..12),
            points in proptest::collection::vec((-6.0f64..6.0, -6.0f64..6.0), 50),
        ) {
            let Some(ring) = convex_polygon(radius, angles) else { return Ok(()) };
            let poly = Polygon { exterior: ring.clone(), holes: vec![] };
            for p in points {
                if on_ring_boundary(p, &ring) {
                    continue;
                }
                prop_assert_eq!(point_in_polygon(p, &poly), winding_number(p, &ring) != 0);
            }
        }

        #[test]
        fn coverage_monotone_in_threshold(query in "[a-e]{3,8}", names in proptest::collection::vec("[a-e]{3,8}", 1..6), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let cs: Vec<Community> = names.iter().enumerate().map(|(i, n)| named(&format!("c{i}"), n)).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let low = match_name(&query, &cs, &MatchPolicy { fuzzy_threshold: lo, ..MatchPolicy::default() });
            let high = match_name(&query, &cs, &MatchPolicy { fuzzy_threshold: hi, ..MatchPolicy::default() });
            prop_assert!(low.is_none() || high.is_some());
            let again = match_name(&query, &cs, &MatchPolicy { fuzzy_threshold: lo, ..MatchPolicy::default() });
            prop_assert_eq!(low, again);
        }
    }
}
