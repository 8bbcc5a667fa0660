//! In-memory geolocalized knowledge graph.
//!
//! Entities are stored densely in insertion order; algorithms address them by
//! `usize` node index and resolve the opaque [`EntityId`] only at the edges of
//! the API. Triples are deduplicated and both adjacency directions are kept in
//! sync with the triple list.

mod geo;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
pub use store::{load, save, EDGES_FILE, NODES_FILE};

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("entity id must be non-empty")]
    EmptyId,
    #[error("coordinates out of range: lat={lat}, lon={lon}")]
    InvalidGeo { lat: f64, lon: f64 },
    #[error("duplicate entity {0}")]
    DuplicateEntity(EntityId),
    #[error("triple endpoint {0} is not in the graph")]
    UnknownEndpoint(EntityId),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Opaque, non-empty entity identifier such as `Q12345`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(value: impl Into<String>) -> Result<Self, KgError> {
        let value = value.into();
        if value.is_empty() {
            Err(KgError::EmptyId)
        } else {
            Ok(Self(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = KgError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> Self {
        id.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Place,
    Knowledge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Wikidata,
    Europeana,
    Synthetic,
    Other,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Wikidata => "wikidata",
            Source::Europeana => "europeana",
            Source::Synthetic => "synthetic",
            Source::Other => "other",
        }
    }

    /// Lenient parse: anything unrecognised maps to `Other`.
    pub fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "wikidata" => Source::Wikidata,
            "europeana" => Source::Europeana,
            "synthetic" => Source::Synthetic,
            _ => Source::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: EntityId,
    pub title: String,
    pub kind: NodeKind,
    pub geo: Option<GeoPoint>,
    pub source: Source,
    pub properties: BTreeMap<String, String>,
}

impl Entity {
    pub fn place(id: EntityId, title: impl Into<String>, geo: Option<GeoPoint>) -> Self {
        Self {
            id,
            title: title.into(),
            kind: NodeKind::Place,
            geo,
            source: Source::Other,
            properties: BTreeMap::new(),
        }
    }

    pub fn knowledge(id: EntityId, title: impl Into<String>) -> Self {
        Self {
            id,
            title: title.into(),
            kind: NodeKind::Knowledge,
            geo: None,
            source: Source::Other,
            properties: BTreeMap::new(),
        }
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }
}

/// Dense handle into a graph's relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

impl RelationId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: String,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: &EntityId, relation: impl Into<String>, tail: &EntityId) -> Self {
        Self {
            head: head.clone(),
            relation: relation.into(),
            tail: tail.clone(),
        }
    }
}

/// Triple expressed in node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexedTriple {
    pub head: usize,
    pub relation: RelationId,
    pub tail: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Undirected,
}

/// Read-only structural access to a graph.
///
/// Subgraph extraction and the neural models only go through this trait, so a
/// wrapper can observe (or forbid) coordinate reads.
pub trait GraphView {
    fn node_count(&self) -> usize;
    fn index_of(&self, id: &EntityId) -> Option<usize>;
    fn id_at(&self, ix: usize) -> &EntityId;
    fn kind_at(&self, ix: usize) -> NodeKind;
    fn title_at(&self, ix: usize) -> &str;
    fn geo_at(&self, ix: usize) -> Option<GeoPoint>;
    /// `(tail, relation)` for every triple with `ix` as head.
    fn out_edges(&self, ix: usize) -> &[(usize, RelationId)];
    /// `(head, relation)` for every triple with `ix` as tail.
    fn in_edges(&self, ix: usize) -> &[(usize, RelationId)];
    fn triples_indexed(&self) -> &[IndexedTriple];
    fn relation_count(&self) -> usize;
    fn relation_label(&self, r: RelationId) -> &str;
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    by_id: HashMap<EntityId, usize>,
    triples: Vec<IndexedTriple>,
    triple_set: HashSet<IndexedTriple>,
    out_index: Vec<Vec<(usize, RelationId)>>,
    in_index: Vec<Vec<(usize, RelationId)>>,
    relation_labels: Vec<String>,
    relation_by_label: HashMap<String, RelationId>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, e: Entity) -> Result<usize, KgError> {
        if self.by_id.contains_key(&e.id) {
            return Err(KgError::DuplicateEntity(e.id));
        }
        let ix = self.entities.len();
        self.by_id.insert(e.id.clone(), ix);
        self.entities.push(e);
        self.out_index.push(Vec::new());
        self.in_index.push(Vec::new());
        Ok(ix)
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn get(&self, id: &EntityId) -> Option<&Entity> {
        self.by_id.get(id).map(|&ix| &self.entities[ix])
    }

    pub fn get_mut(&mut self, id: &EntityId) -> Option<&mut Entity> {
        match self.by_id.get(id) {
            Some(&ix) => Some(&mut self.entities[ix]),
            None => None,
        }
    }

    pub fn entity(&self, ix: usize) -> &Entity {
        &self.entities[ix]
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// Interns `label`, returning its dense id.
    pub fn intern_relation(&mut self, label: &str) -> RelationId {
        if let Some(&r) = self.relation_by_label.get(label) {
            return r;
        }
        let r = RelationId(self.relation_labels.len());
        self.relation_labels.push(label.to_string());
        self.relation_by_label.insert(label.to_string(), r);
        r
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_by_label.get(label).copied()
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        &self.relation_labels[r.0]
    }

    pub fn relation_labels(&self) -> &[String] {
        &self.relation_labels
    }

    /// Adds a triple; returns `false` if it was already present.
    pub fn add_triple(&mut self, t: &Triple) -> Result<bool, KgError> {
        let head = *self
            .by_id
            .get(&t.head)
            .ok_or_else(|| KgError::UnknownEndpoint(t.head.clone()))?;
        let tail = *self
            .by_id
            .get(&t.tail)
            .ok_or_else(|| KgError::UnknownEndpoint(t.tail.clone()))?;
        let relation = self.intern_relation(&t.relation);
        Ok(self.add_indexed(IndexedTriple { head, relation, tail }))
    }

    pub(crate) fn add_indexed(&mut self, t: IndexedTriple) -> bool {
        if !self.triple_set.insert(t) {
            return false;
        }
        self.triples.push(t);
        self.out_index[t.head].push((t.tail, t.relation));
        self.in_index[t.tail].push((t.head, t.relation));
        true
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// All triples in insertion order, resolved to ids and labels.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples.iter().map(|t| Triple {
            head: self.entities[t.head].id.clone(),
            relation: self.relation_labels[t.relation.0].clone(),
            tail: self.entities[t.tail].id.clone(),
        })
    }

    pub fn neighbors(
        &self,
        id: &EntityId,
        mode: Direction,
        kind_filter: Option<NodeKind>,
    ) -> Result<BTreeSet<(EntityId, RelationId)>, KgError> {
        let ix = *self
            .by_id
            .get(id)
            .ok_or_else(|| KgError::UnknownEntity(id.clone()))?;
        let out = matches!(mode, Direction::Out | Direction::Undirected);
        let inc = matches!(mode, Direction::In | Direction::Undirected);
        let mut result = BTreeSet::new();
        let lists = [(out, &self.out_index[ix]), (inc, &self.in_index[ix])];
        for (enabled, list) in lists {
            if !enabled {
                continue;
            }
            for &(n, r) in list {
                if kind_filter.is_none_or(|k| self.entities[n].kind == k) {
                    result.insert((self.entities[n].id.clone(), r));
                }
            }
        }
        Ok(result)
    }

    pub fn stats(&self) -> DatasetStats {
        let n_place = self
            .entities
            .iter()
            .filter(|e| e.kind == NodeKind::Place)
            .count();
        let mut n_place_place_links = 0;
        let mut max_distance_km: Option<f64> = None;
        for t in &self.triples {
            let (h, tl) = (&self.entities[t.head], &self.entities[t.tail]);
            if h.kind != NodeKind::Place || tl.kind != NodeKind::Place {
                continue;
            }
            n_place_place_links += 1;
            if let (Some(a), Some(b)) = (h.geo, tl.geo) {
                let d = haversine_km(a, b);
                max_distance_km = Some(max_distance_km.map_or(d, |m| m.max(d)));
            }
        }
        DatasetStats {
            n_place,
            n_knowledge: self.entities.len() - n_place,
            n_links: self.triples.len(),
            n_relation_types: self.relation_labels.len(),
            n_place_place_links,
            max_distance_km,
        }
    }

    /// Full scan: every stored triple appears in both adjacency lists and the
    /// lists hold nothing else.
    pub fn check_index_consistency(&self) -> bool {
        let mut out_count = 0;
        let mut in_count = 0;
        for t in &self.triples {
            if !self.out_index[t.head].contains(&(t.tail, t.relation))
                || !self.in_index[t.tail].contains(&(t.head, t.relation))
            {
                return false;
            }
        }
        for (ix, list) in self.out_index.iter().enumerate() {
            out_count += list.len();
            if list.iter().any(|&(tail, relation)| {
                !self.triple_set.contains(&IndexedTriple { head: ix, relation, tail })
            }) {
                return false;
            }
        }
        for (ix, list) in self.in_index.iter().enumerate() {
            in_count += list.len();
            if list.iter().any(|&(head, relation)| {
                !self.triple_set.contains(&IndexedTriple { head, relation, tail: ix })
            }) {
                return false;
            }
        }
        out_count == self.triples.len() && in_count == self.triples.len()
    }
}

impl GraphView for KnowledgeGraph {
    fn node_count(&self) -> usize {
        self.entities.len()
    }
    fn index_of(&self, id: &EntityId) -> Option<usize> {
        self.by_id.get(id).copied()
    }
    fn id_at(&self, ix: usize) -> &EntityId {
        &self.entities[ix].id
    }
    fn kind_at(&self, ix: usize) -> NodeKind {
        self.entities[ix].kind
    }
    fn title_at(&self, ix: usize) -> &str {
        &self.entities[ix].title
    }
    fn geo_at(&self, ix: usize) -> Option<GeoPoint> {
        self.entities[ix].geo
    }
    fn out_edges(&self, ix: usize) -> &[(usize, RelationId)] {
        &self.out_index[ix]
    }
    fn in_edges(&self, ix: usize) -> &[(usize, RelationId)] {
        &self.in_index[ix]
    }
    fn triples_indexed(&self) -> &[IndexedTriple] {
        &self.triples
    }
    fn relation_count(&self) -> usize {
        self.relation_labels.len()
    }
    fn relation_label(&self, r: RelationId) -> &str {
        &self.relation_labels[r.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_place: usize,
    pub n_knowledge: usize,
    pub n_links: usize,
    pub n_relation_types: usize,
    pub n_place_place_links: usize,
    /// Maximum distance over directly linked Place pairs with both coordinates.
    pub max_distance_km: Option<f64>,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "#Place Nodes\t{}", self.n_place)?;
        writeln!(f, "#Knowledge Nodes\t{}", self.n_knowledge)?;
        writeln!(f, "#Links\t{}", self.n_links)?;
        writeln!(f, "#Relation types\t{}", self.n_relation_types)?;
        writeln!(f, "#Place-Place links\t{}", self.n_place_place_links)?;
        match self.max_distance_km {
            Some(d) => writeln!(f, "Maximum distance\t{d:.2} KMs"),
            None => writeln!(f, "Maximum distance\t-"),
        }
    }
}
