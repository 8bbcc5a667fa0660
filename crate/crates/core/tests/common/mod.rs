#![allow(dead_code)]

use std::cell::RefCell;
use std::path::PathBuf;

use geokg::ingest::offline::OfflineDumps;
use geokg::ingest::{ingest_city, IngestConfig, IngestSummary, Sources};
use geokg::kg::{
    Entity, EntityId, GeoPoint, GraphView, IndexedTriple, KnowledgeGraph, NodeKind, RelationId,
    Source, Triple,
};
use serde::Deserialize;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn id(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

pub fn ingest_testville(hops: usize) -> (KnowledgeGraph, IngestSummary) {
    let dumps = OfflineDumps::open(&fixture("testville"), true).unwrap();
    let cfg = IngestConfig { hops, ..IngestConfig::default() };
    let mut g = KnowledgeGraph::new();
    let summary = ingest_city("testville", &cfg, &Sources::offline(&dumps), &mut g).unwrap();
    (g, summary)
}

#[derive(Deserialize)]
pub struct HopRow {
    pub hops: usize,
    pub n_place: usize,
    pub n_knowledge: usize,
    pub n_links: usize,
}

#[derive(Deserialize)]
pub struct Expected {
    pub stats: geokg::kg::DatasetStats,
    pub by_hops: Vec<HopRow>,
    pub dropped_outside_bbox: usize,
    pub related_to: Vec<(String, String)>,
}

pub fn testville_expected() -> Expected {
    let text = std::fs::read_to_string(fixture("testville/expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[derive(Deserialize)]
struct TitleEntity {
    id: String,
    title: String,
    #[serde(default)]
    kind: String,
    instance_of: Option<String>,
}

#[derive(Deserialize)]
struct TitleFixture {
    wikidata: Vec<TitleEntity>,
    europeana: Vec<TitleEntity>,
    expected: Vec<(String, String)>,
}

/// Graph built from the linker title fixture, with the authored expectations.
pub fn linker_fixture() -> (KnowledgeGraph, Vec<(String, String)>) {
    let text = std::fs::read_to_string(fixture("linker/titles.json")).unwrap();
    let f: TitleFixture = serde_json::from_str(&text).unwrap();
    let mut g = KnowledgeGraph::new();
    for w in &f.wikidata {
        let e = if w.kind == "place" {
            Entity::place(id(&w.id), &w.title, Some(GeoPoint::new(41.4, 2.17).unwrap()))
        } else {
            Entity::knowledge(id(&w.id), &w.title)
        };
        g.add_entity(e.with_source(Source::Wikidata)).unwrap();
    }
    for w in &f.wikidata {
        if let Some(t) = &w.instance_of {
            g.add_triple(&Triple::new(&id(&w.id), "instance_of", &id(t))).unwrap();
        }
    }
    for e in &f.europeana {
        g.add_entity(Entity::knowledge(id(&e.id), &e.title).with_source(Source::Europeana)).unwrap();
    }
    (g, f.expected)
}

/// Graph wrapper that records every coordinate read.
pub struct GeoTracker<'a> {
    pub inner: &'a KnowledgeGraph,
    pub reads: RefCell<Vec<usize>>,
}

impl<'a> GeoTracker<'a> {
    pub fn new(inner: &'a KnowledgeGraph) -> Self {
        Self { inner, reads: RefCell::new(Vec::new()) }
    }
}

impl GraphView for GeoTracker<'_> {
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }
    fn index_of(&self, id: &EntityId) -> Option<usize> {
        self.inner.index_of(id)
    }
    fn id_at(&self, ix: usize) -> &EntityId {
        self.inner.id_at(ix)
    }
    fn kind_at(&self, ix: usize) -> NodeKind {
        self.inner.kind_at(ix)
    }
    fn title_at(&self, ix: usize) -> &str {
        self.inner.title_at(ix)
    }
    fn geo_at(&self, ix: usize) -> Option<GeoPoint> {
        self.reads.borrow_mut().push(ix);
        self.inner.geo_at(ix)
    }
    fn out_edges(&self, ix: usize) -> &[(usize, RelationId)] {
        self.inner.out_edges(ix)
    }
    fn in_edges(&self, ix: usize) -> &[(usize, RelationId)] {
        self.inner.in_edges(ix)
    }
    fn triples_indexed(&self) -> &[IndexedTriple] {
        self.inner.triples_indexed()
    }
    fn relation_count(&self) -> usize {
        self.inner.relation_count()
    }
    fn relation_label(&self, r: RelationId) -> &str {
        self.inner.relation_label(r)
    }
}

/// Random mixed-kind graph: 2..=30 nodes, at most 90 triples over three
/// relation labels. Self-loops and parallel relations may occur.
pub fn random_graph(seed: u64) -> KnowledgeGraph {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=30);
    let mut g = KnowledgeGraph::new();
    for i in 0..n {
        let nid = id(&format!("n{i:02}"));
        let e = if i < 2 || rng.gen_bool(0.7) {
            Entity::place(nid, format!("place {i}"), None)
        } else {
            Entity::knowledge(nid, format!("thing {i}"))
        };
        g.add_entity(e).unwrap();
    }
    let m = rng.gen_range(0..=90);
    for _ in 0..m {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let rel = ["r0", "r1", "r2"][rng.gen_range(0..3)];
        g.add_triple(&Triple::new(&id(&format!("n{a:02}")), rel, &id(&format!("n{b:02}")))).unwrap();
    }
    g
}

/// `{u, v}` together with every node on a simple undirected path of at most
/// `k + 1` edges from `u` to `v` that only visits Places. Plain exhaustive
/// search.
pub fn brute_force_nodes(g: &KnowledgeGraph, u: &EntityId, v: &EntityId, k: usize) -> std::collections::BTreeSet<EntityId> {
    let n = g.node_count();
    let mut adj = vec![Vec::new(); n];
    for t in g.triples_indexed() {
        adj[t.head].push(t.tail);
        adj[t.tail].push(t.head);
    }
    let place = |x: usize| g.kind_at(x) == NodeKind::Place;
    let (ui, vi) = (g.index_of(u).unwrap(), g.index_of(v).unwrap());
    let mut out = std::collections::BTreeSet::from([u.clone(), v.clone()]);
    let mut stack = vec![vec![ui]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if last == vi {
            out.extend(path.iter().map(|&x| g.id_at(x).clone()));
            continue;
        }
        if path.len() > k + 1 {
            continue;
        }
        for &nb in &adj[last] {
            if place(nb) && !path.contains(&nb) {
                let mut p = path.clone();
                p.push(nb);
                stack.push(p);
            }
        }
    }
    out
}

/// First two Places of a random graph by index, if any.
pub fn two_places(g: &KnowledgeGraph) -> Option<(EntityId, EntityId)> {
    let mut ps = g.entities().iter().filter(|e| e.kind == NodeKind::Place).map(|e| e.id.clone());
    Some((ps.next()?, ps.next()?))
}
