//! Growing a knowledge graph from a city's bounding box.
//!
//! The pipeline is: resolve the city bbox, add the geo-entities inside it as
//! Places, add Europeana items, expand breadth-first along statements for a
//! fixed number of hops, then link Europeana titles to Wikidata entities.
//! Every source is a trait so offline dumps and live endpoints are
//! interchangeable.

mod linker;
pub mod live;
pub mod offline;
mod pipeline;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::kg::{Entity, EntityId, GeoPoint, KgError, KnowledgeGraph, NodeKind, Source, Triple};

pub use linker::{link_by_title, LinkCandidate, SpanKind, RELATED_TO};
pub use pipeline::{ingest_city, IngestSummary, Sources};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("city not found: {0}")]
    CityNotFound(String),
    #[error("{provider} unavailable: {cause}")]
    ProviderUnavailable { provider: String, cause: String },
    #[error("missing dump file {0}")]
    MissingDump(PathBuf),
    #[error("{source_name} item {item}: malformed record: {reason}")]
    MalformedRecord {
        source_name: String,
        item: usize,
        reason: String,
    },
    #[error("invalid bounding box for {0}")]
    InvalidScope(String),
    #[error("source error: {0}")]
    Source(String),
    #[error(transparent)]
    Graph(#[from] KgError),
}

/// A city name with its bounding box in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityScope {
    pub name: String,
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl CityScope {
    pub fn new(
        name: impl Into<String>,
        min_lat: f64,
        min_lon: f64,
        max_lat: f64,
        max_lon: f64,
    ) -> Result<Self, IngestError> {
        let name = name.into();
        let corners_ok =
            GeoPoint::new(min_lat, min_lon).is_ok() && GeoPoint::new(max_lat, max_lon).is_ok();
        if !corners_ok || min_lat > max_lat || min_lon > max_lon {
            return Err(IngestError::InvalidScope(name));
        }
        Ok(Self {
            name,
            min_lat,
            min_lon,
            max_lat,
            max_lon,
        })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat())
            && (self.min_lon..=self.max_lon).contains(&p.lon())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Wikidata,
    Europeana,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub hops: usize,
    /// Class identifiers matched against instance-of / subclass-of; empty accepts all.
    pub type_whitelist: BTreeSet<String>,
    pub sources: BTreeSet<DataSource>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            hops: 3,
            type_whitelist: BTreeSet::new(),
            sources: [DataSource::Wikidata, DataSource::Europeana].into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatementValue {
    Target(EntityId),
    Literal(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub rel: String,
    pub value: StatementValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawPlaceRecord {
    pub id: EntityId,
    pub title: String,
    pub geo: GeoPoint,
    pub instance_of: Vec<String>,
    pub subclass_of: Vec<String>,
    pub properties: BTreeMap<String, String>,
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawKnowledgeRecord {
    pub id: EntityId,
    pub title: String,
    pub geo: Option<GeoPoint>,
    pub properties: BTreeMap<String, String>,
    pub statements: Vec<Statement>,
}

pub trait BboxProvider {
    fn resolve(&self, city: &str) -> Result<CityScope, IngestError>;
}

pub trait PlaceSource {
    fn places(&self, scope: &CityScope) -> Result<Vec<RawPlaceRecord>, IngestError>;
}

pub trait StatementSource {
    /// Title, properties and outgoing statements of `id`, if the source knows it.
    fn lookup(&self, id: &EntityId) -> Result<Option<RawKnowledgeRecord>, IngestError>;
    /// `(head, relation)` for statements whose target is `id`.
    fn referencing(&self, id: &EntityId) -> Result<Vec<(EntityId, String)>, IngestError>;
}

/// Europeana-style item search. Items are returned as raw JSON objects with
/// `id`, `title`, optional `lat`/`lon` and optional `props`.
pub trait ItemSource {
    fn items(&self, scope: &CityScope) -> Result<Vec<serde_json::Value>, IngestError>;
}

pub fn resolve_bbox(city: &str, provider: &dyn BboxProvider) -> Result<CityScope, IngestError> {
    provider.resolve(city)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PlaceIngestReport {
    pub added: usize,
    pub already_present: usize,
    pub dropped_outside_bbox: usize,
    pub filtered_by_type: usize,
    pub triples_added: usize,
}

fn merge_literals(e: &mut Entity, statements: &[Statement]) {
    for s in statements {
        if let StatementValue::Literal(v) = &s.value {
            e.properties.entry(s.rel.clone()).or_insert_with(|| v.clone());
        }
    }
}

/// Adds every accepted record as a Place. Entity-valued statements between
/// records of the same batch become triples.
pub fn ingest_places(
    scope: &CityScope,
    cfg: &IngestConfig,
    source: &dyn PlaceSource,
    g: &mut KnowledgeGraph,
) -> Result<PlaceIngestReport, IngestError> {
    let mut report = PlaceIngestReport::default();
    let records = source.places(scope)?;
    let mut accepted = Vec::new();
    for rec in records {
        if !scope.contains(rec.geo) {
            log::warn!("dropping {}: outside the {} bbox", rec.id, scope.name);
            report.dropped_outside_bbox += 1;
            continue;
        }
        if !cfg.type_whitelist.is_empty()
            && !rec
                .instance_of
                .iter()
                .chain(&rec.subclass_of)
                .any(|t| cfg.type_whitelist.contains(t))
        {
            report.filtered_by_type += 1;
            continue;
        }
        if g.contains(&rec.id) {
            report.already_present += 1;
            accepted.push(rec);
            continue;
        }
        let mut e = Entity::place(rec.id.clone(), rec.title.clone(), Some(rec.geo))
            .with_source(Source::Wikidata);
        e.properties = rec.properties.clone();
        if !rec.instance_of.is_empty() {
            e.properties.insert("instance_of".into(), rec.instance_of.join(","));
        }
        if !rec.subclass_of.is_empty() {
            e.properties.insert("subclass_of".into(), rec.subclass_of.join(","));
        }
        merge_literals(&mut e, &rec.statements);
        g.add_entity(e)?;
        report.added += 1;
        accepted.push(rec);
    }
    for rec in &accepted {
        for s in &rec.statements {
            if let StatementValue::Target(t) = &s.value {
                if g.contains(t) && g.add_triple(&Triple::new(&rec.id, s.rel.clone(), t))? {
                    report.triples_added += 1;
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExpandReport {
    pub knowledge_added: usize,
    pub triples_added: usize,
}

struct RecordCache<'a> {
    source: &'a dyn StatementSource,
    cache: HashMap<EntityId, Option<RawKnowledgeRecord>>,
}

impl RecordCache<'_> {
    fn get(&mut self, id: &EntityId) -> Result<Option<&RawKnowledgeRecord>, IngestError> {
        if !self.cache.contains_key(id) {
            let rec = self.source.lookup(id)?;
            self.cache.insert(id.clone(), rec);
        }
        Ok(self.cache[id].as_ref())
    }
}

/// Ensures `id` exists, creating a Knowledge node titled from the source.
fn ensure_knowledge(
    g: &mut KnowledgeGraph,
    cache: &mut RecordCache<'_>,
    id: &EntityId,
    report: &mut ExpandReport,
) -> Result<usize, IngestError> {
    if let Some(ix) = crate::kg::GraphView::index_of(g, id) {
        return Ok(ix);
    }
    let mut e = Entity::knowledge(id.clone(), "").with_source(Source::Wikidata);
    if let Some(rec) = cache.get(id)? {
        e.title = rec.title.clone();
        e.properties = rec.properties.clone();
    }
    report.knowledge_added += 1;
    Ok(g.add_entity(e)?)
}

/// Breadth-first expansion from every Place over undirected statements,
/// advancing the frontier exactly `cfg.hops` times.
pub fn expand_hops(
    g: &mut KnowledgeGraph,
    cfg: &IngestConfig,
    source: &dyn StatementSource,
) -> Result<ExpandReport, IngestError> {
    let mut report = ExpandReport::default();
    let mut cache = RecordCache {
        source,
        cache: HashMap::new(),
    };
    let mut frontier: Vec<usize> = (0..g.entities().len())
        .filter(|&ix| g.entity(ix).kind == NodeKind::Place)
        .collect();
    let mut visited: HashSet<usize> = frontier.iter().copied().collect();

    for _ in 0..cfg.hops {
        let mut next = Vec::new();
        for &f in &frontier {
            let fid = g.entity(f).id.clone();
            let statements = cache.get(&fid)?.map(|r| r.statements.clone());
            if let Some(statements) = statements {
                merge_literals(g.get_mut(&fid).expect("frontier node"), &statements);
                for s in &statements {
                    let StatementValue::Target(target) = &s.value else { continue };
                    let t = ensure_knowledge(g, &mut cache, target, &mut report)?;
                    if g.add_triple(&Triple::new(&fid, s.rel.clone(), target))? {
                        report.triples_added += 1;
                    }
                    if visited.insert(t) {
                        next.push(t);
                    }
                }
            }
            for (head, rel) in source.referencing(&fid)? {
                let h = ensure_knowledge(g, &mut cache, &head, &mut report)?;
                if g.add_triple(&Triple::new(&head, rel, &fid))? {
                    report.triples_added += 1;
                }
                if visited.insert(h) {
                    next.push(h);
                }
            }
        }
        frontier = next;
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ItemIngestReport {
    pub added: usize,
    pub already_present: usize,
}

#[derive(Deserialize)]
struct ItemRecord {
    id: String,
    #[serde(default)]
    title: String,
    lat: Option<f64>,
    lon: Option<f64>,
    #[serde(default)]
    props: BTreeMap<String, String>,
}

/// Adds Europeana items: Place when the item carries coordinates, otherwise
/// Knowledge. `item` in errors is the 0-based position in the result set.
pub fn ingest_europeana(
    scope: &CityScope,
    source: &dyn ItemSource,
    g: &mut KnowledgeGraph,
) -> Result<ItemIngestReport, IngestError> {
    let malformed = |item: usize, reason: String| IngestError::MalformedRecord {
        source_name: "europeana".into(),
        item,
        reason,
    };
    let items = source.items(scope)?;
    let mut parsed = Vec::with_capacity(items.len());
    for (i, raw) in items.into_iter().enumerate() {
        let rec: ItemRecord = serde_json::from_value(raw).map_err(|e| malformed(i, e.to_string()))?;
        let id = EntityId::new(rec.id).map_err(|e| malformed(i, e.to_string()))?;
        let geo = match (rec.lat, rec.lon) {
            (Some(lat), Some(lon)) => {
                Some(GeoPoint::new(lat, lon).map_err(|e| malformed(i, e.to_string()))?)
            }
            (None, None) => None,
            _ => return Err(malformed(i, "lat and lon must be given together".into())),
        };
        parsed.push((id, rec.title, geo, rec.props));
    }
    let mut report = ItemIngestReport::default();
    for (id, title, geo, props) in parsed {
        if g.contains(&id) {
            report.already_present += 1;
            continue;
        }
        let mut e = match geo {
            Some(p) => Entity::place(id, title, Some(p)),
            None => Entity::knowledge(id, title),
        }
        .with_source(Source::Europeana);
        e.properties = props;
        g.add_entity(e)?;
        report.added += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::GraphView;

    struct VecPlaces(Vec<RawPlaceRecord>);
    impl PlaceSource for VecPlaces {
        fn places(&self, _: &CityScope) -> Result<Vec<RawPlaceRecord>, IngestError> {
            Ok(self.0.clone())
        }
    }

    #[derive(Default)]
    struct MapStatements(BTreeMap<String, (String, Vec<(&'static str, &'static str)>)>);
    impl MapStatements {
        fn with(mut self, id: &str, title: &str, st: &[(&'static str, &'static str)]) -> Self {
            self.0.insert(id.into(), (title.into(), st.to_vec()));
            self
        }
    }
    impl StatementSource for MapStatements {
        fn lookup(&self, id: &EntityId) -> Result<Option<RawKnowledgeRecord>, IngestError> {
            Ok(self.0.get(id.as_str()).map(|(title, st)| RawKnowledgeRecord {
                id: id.clone(),
                title: title.clone(),
                geo: None,
                properties: BTreeMap::new(),
                statements: st
                    .iter()
                    .map(|(rel, t)| Statement {
                        rel: rel.to_string(),
                        value: match t.strip_prefix('"') {
                            Some(lit) => StatementValue::Literal(lit.to_string()),
                            None => StatementValue::Target(EntityId::new(*t).unwrap()),
                        },
                    })
                    .collect(),
            }))
        }
        fn referencing(&self, id: &EntityId) -> Result<Vec<(EntityId, String)>, IngestError> {
            let mut out = Vec::new();
            for (head, (_, st)) in &self.0 {
                for (rel, t) in st {
                    if *t == id.as_str() {
                        out.push((EntityId::new(head.clone()).unwrap(), rel.to_string()));
                    }
                }
            }
            Ok(out)
        }
    }

    fn place(id: &str, lat: f64, types: &[&str]) -> RawPlaceRecord {
        RawPlaceRecord {
            id: EntityId::new(id).unwrap(),
            title: format!("title {id}"),
            geo: GeoPoint::new(lat, 0.5).unwrap(),
            instance_of: types.iter().map(|s| s.to_string()).collect(),
            subclass_of: vec![],
            properties: BTreeMap::new(),
            statements: vec![],
        }
    }

    fn scope() -> CityScope {
        CityScope::new("testville", 0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn seeded(ids: &[&str]) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        let src = VecPlaces(ids.iter().map(|id| place(id, 0.5, &[])).collect());
        ingest_places(&scope(), &IngestConfig::default(), &src, &mut g).unwrap();
        g
    }

    #[test]
    fn whitelist_and_bbox_filtering() {
        let src = VecPlaces(vec![
            place("A", 0.1, &["museum"]),
            place("B", 0.2, &["church"]),
            place("C", 0.3, &[]),
            place("D", 0.4, &["tower"]),
            place("OUT", 1.5, &["museum"]),
        ]);
        let mut g = KnowledgeGraph::new();
        let r = ingest_places(&scope(), &IngestConfig::default(), &src, &mut g).unwrap();
        assert_eq!((r.added, r.dropped_outside_bbox), (4, 1));

        let cfg = IngestConfig {
            type_whitelist: ["museum".to_string()].into(),
            ..IngestConfig::default()
        };
        let mut g = KnowledgeGraph::new();
        let r = ingest_places(&scope(), &cfg, &src, &mut g).unwrap();
        assert_eq!(r.added, 1);
        assert_eq!(r.filtered_by_type, 3);
        assert!(g.contains(&EntityId::new("A").unwrap()));
    }

    #[test]
    fn zero_hops_adds_nothing() {
        let mut g = seeded(&["P"]);
        let src = MapStatements::default().with("P", "p", &[("r", "K1")]);
        let cfg = IngestConfig { hops: 0, ..IngestConfig::default() };
        assert_eq!(expand_hops(&mut g, &cfg, &src).unwrap(), ExpandReport::default());
    }

    #[test]
    fn star_expansion_one_hop() {
        let mut g = seeded(&["P"]);
        let src = MapStatements::default()
            .with("P", "p", &[("a", "K1"), ("b", "K2"), ("c", "K3"), ("year", "\"1901")])
            .with("K1", "first", &[("d", "K4")]);
        let cfg = IngestConfig { hops: 1, ..IngestConfig::default() };
        let r = expand_hops(&mut g, &cfg, &src).unwrap();
        assert_eq!(r, ExpandReport { knowledge_added: 3, triples_added: 3 });
        let k1 = g.get(&EntityId::new("K1").unwrap()).unwrap();
        assert_eq!((k1.kind, k1.title.as_str()), (NodeKind::Knowledge, "first"));
        let p = g.get(&EntityId::new("P").unwrap()).unwrap();
        assert_eq!(p.properties.get("year").map(String::as_str), Some("1901"));
        assert!(!g.contains(&EntityId::new("K4").unwrap()));
    }

    #[test]
    fn chain_expansion_stops_at_hop_count() {
        let mut g = seeded(&["P"]);
        let src = MapStatements::default()
            .with("P", "p", &[("r", "K1")])
            .with("K1", "k1", &[("r", "K2")])
            .with("K2", "k2", &[("r", "K3")]);
        let cfg = IngestConfig { hops: 2, ..IngestConfig::default() };
        expand_hops(&mut g, &cfg, &src).unwrap();
        let has = |s: &str| g.contains(&EntityId::new(s).unwrap());
        assert!(has("K1") && has("K2") && !has("K3"));
    }

    #[test]
    fn expansion_is_undirected_and_idempotent() {
        let mut g = seeded(&["P"]);
        let src = MapStatements::default()
            .with("X", "refers to P", &[("about", "P")])
            .with("P", "p", &[]);
        let cfg = IngestConfig { hops: 1, ..IngestConfig::default() };
        let r1 = expand_hops(&mut g, &cfg, &src).unwrap();
        assert_eq!(r1, ExpandReport { knowledge_added: 1, triples_added: 1 });
        let before = g.stats();
        let r2 = expand_hops(&mut g, &cfg, &src).unwrap();
        assert_eq!(r2, ExpandReport::default());
        assert_eq!(g.stats(), before);
    }

    #[test]
    fn existing_entities_are_linked_not_duplicated() {
        let mut g = seeded(&["P", "Q"]);
        let src = MapStatements::default().with("P", "p", &[("next_to", "Q")]);
        let cfg = IngestConfig { hops: 1, ..IngestConfig::default() };
        let r = expand_hops(&mut g, &cfg, &src).unwrap();
        assert_eq!(r.knowledge_added, 0);
        assert_eq!(g.triple_count(), 1);
        let q = g.index_of(&EntityId::new("Q").unwrap()).unwrap();
        assert_eq!(g.kind_at(q), NodeKind::Place);
    }

    struct VecItems(Vec<serde_json::Value>);
    impl ItemSource for VecItems {
        fn items(&self, _: &CityScope) -> Result<Vec<serde_json::Value>, IngestError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn europeana_items() {
        let mut g = KnowledgeGraph::new();
        let src = VecItems(vec![
            serde_json::json!({"id": "EU:1", "title": "A painting"}),
            serde_json::json!({"id": "EU:2", "title": "A view", "lat": 0.5, "lon": 0.5}),
        ]);
        let r = ingest_europeana(&scope(), &src, &mut g).unwrap();
        assert_eq!(r.added, 2);
        let s = g.stats();
        assert_eq!((s.n_place, s.n_knowledge), (1, 1));
        assert_eq!(g.entity(0).source, Source::Europeana);
        assert_eq!(ingest_europeana(&scope(), &src, &mut g).unwrap().added, 0);

        let empty = VecItems(vec![]);
        assert_eq!(ingest_europeana(&scope(), &empty, &mut g).unwrap().added, 0);

        let bad = VecItems(vec![
            serde_json::json!({"id": "EU:3"}),
            serde_json::json!({"title": "no id"}),
        ]);
        match ingest_europeana(&scope(), &bad, &mut g) {
            Err(IngestError::MalformedRecord { item, .. }) => assert_eq!(item, 1),
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn scope_validation() {
        assert!(CityScope::new("x", 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(CityScope::new("x", 0.0, 0.0, 95.0, 1.0).is_err());
    }
}
