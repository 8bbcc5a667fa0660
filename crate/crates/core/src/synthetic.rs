//! Seeded grid-city generator for experiments without network access.
//!
//! Places sit on a jittered lattice. Neighbouring Places are linked with a
//! relation naming their lattice offset, districts and landmarks hang off
//! Places as Knowledge nodes, and word vectors vary smoothly with street
//! position so titles carry location.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{Entity, EntityId, GeoPoint, KgError, KnowledgeGraph, Source, Triple};
use crate::models::{EmbeddingProvider, ModelError};

const STREETS: [&str; 20] = [
    "alder", "birch", "cedar", "dogwood", "elm", "fir", "ginkgo", "hazel", "ilex", "juniper",
    "kapok", "larch", "maple", "nutmeg", "olive", "poplar", "quince", "rowan", "spruce", "tamarind",
];
const AVENUES: [&str; 20] = [
    "amber", "beryl", "coral", "diamond", "emerald", "flint", "garnet", "hematite", "iolite",
    "jade", "kyanite", "lapis", "marble", "nacre", "onyx", "pearl", "quartz", "ruby", "slate",
    "topaz",
];
const LANDMARK_KINDS: [&str; 6] = ["museum", "church", "market", "theatre", "festival", "school"];

pub const REL_NEXT: &str = "next_to";
pub const REL_DIAGONAL: &str = "diagonal_to";
pub const REL_NEAR: &str = "near";
pub const REL_DISTRICT: &str = "located_in";
pub const REL_LANDMARK: &str = "located_at";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCityConfig {
    pub rows: usize,
    pub cols: usize,
    pub origin: (f64, f64),
    pub spacing_km: f64,
    /// Coordinate jitter as a fraction of the spacing.
    pub jitter: f64,
    /// Probability of a two-step straight link.
    pub near_prob: f64,
    /// Side length, in Places, of a square district.
    pub district_size: usize,
    pub landmarks: usize,
    pub word_dim: usize,
    pub seed: u64,
}

impl Default for GridCityConfig {
    fn default() -> Self {
        Self {
            rows: 13,
            cols: 12,
            origin: (41.38, 2.17),
            spacing_km: 0.25,
            jitter: 0.04,
            near_prob: 0.25,
            district_size: 3,
            landmarks: 90,
            word_dim: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub graph: KnowledgeGraph,
    pub embeddings: EmbeddingProvider,
}

pub fn place_id(row: usize, col: usize) -> EntityId {
    EntityId::new(format!("P{row:02}_{col:02}")).expect("non-empty")
}

pub fn grid_city(cfg: &GridCityConfig) -> Result<SyntheticCity, SyntheticError> {
    if cfg.rows < 2 || cfg.cols < 2 {
        return Err(SyntheticError::Invalid("need at least 2×2 Places".into()));
    }
    if cfg.rows > STREETS.len() || cfg.cols > AVENUES.len() {
        return Err(SyntheticError::Invalid(format!(
            "at most {}×{} Places are named",
            STREETS.len(),
            AVENUES.len()
        )));
    }
    if cfg.word_dim < 4 || cfg.district_size == 0 || !(cfg.spacing_km > 0.0) {
        return Err(SyntheticError::Invalid("word_dim ≥ 4, district_size ≥ 1, spacing > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = KnowledgeGraph::new();

    let (lat0, lon0) = cfg.origin;
    let dlat = (cfg.spacing_km / crate::kg::EARTH_RADIUS_KM).to_degrees();
    let dlon = dlat / lat0.to_radians().cos();
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let jl = rng.gen_range(-1.0..=1.0) * cfg.jitter;
            let jo = rng.gen_range(-1.0..=1.0) * cfg.jitter;
            let geo = GeoPoint::new(lat0 + (r as f64 + jl) * dlat, lon0 + (c as f64 + jo) * dlon)?;
            let title = format!("{} {}", capital(STREETS[r]), capital(AVENUES[c]));
            g.add_entity(Entity::place(place_id(r, c), title, Some(geo)).with_source(Source::Synthetic))?;
        }
    }

    let link = |g: &mut KnowledgeGraph, a: (usize, usize), b: (usize, usize), rel: &str| {
        g.add_triple(&Triple::new(&place_id(a.0, a.1), rel, &place_id(b.0, b.1)))
    };
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            if c + 1 < cfg.cols {
                link(&mut g, (r, c), (r, c + 1), REL_NEXT)?;
            }
            if r + 1 < cfg.rows {
                link(&mut g, (r, c), (r + 1, c), REL_NEXT)?;
            }
            if r + 1 < cfg.rows && c + 1 < cfg.cols {
                link(&mut g, (r, c), (r + 1, c + 1), REL_DIAGONAL)?;
            }
            if c + 2 < cfg.cols && rng.gen_bool(cfg.near_prob) {
                link(&mut g, (r, c), (r, c + 2), REL_NEAR)?;
            }
            if r + 2 < cfg.rows && rng.gen_bool(cfg.near_prob) {
                link(&mut g, (r, c), (r + 2, c), REL_NEAR)?;
            }
        }
    }

    let ds = cfg.district_size;
    for br in 0..cfg.rows.div_ceil(ds) {
        for bc in 0..cfg.cols.div_ceil(ds) {
            let id = EntityId::new(format!("D{br:02}_{bc:02}"))?;
            let (cr, cc) = ((br * ds + ds / 2).min(cfg.rows - 1), (bc * ds + ds / 2).min(cfg.cols - 1));
            let title = format!("{} {} quarter", capital(STREETS[cr]), capital(AVENUES[cc]));
            g.add_entity(Entity::knowledge(id.clone(), title).with_source(Source::Synthetic))?;
            for r in br * ds..((br + 1) * ds).min(cfg.rows) {
                for c in bc * ds..((bc + 1) * ds).min(cfg.cols) {
                    g.add_triple(&Triple::new(&place_id(r, c), REL_DISTRICT, &id))?;
                }
            }
        }
    }

    for i in 0..cfg.landmarks {
        let (r, c) = (rng.gen_range(0..cfg.rows), rng.gen_range(0..cfg.cols));
        let kind = LANDMARK_KINDS[i % LANDMARK_KINDS.len()];
        let id = EntityId::new(format!("L{i:03}"))?;
        let title = format!("{} {} {}", capital(kind), capital(STREETS[r]), capital(AVENUES[c]));
        g.add_entity(Entity::knowledge(id.clone(), title).with_source(Source::Synthetic))?;
        g.add_triple(&Triple::new(&id, REL_LANDMARK, &place_id(r, c)))?;
    }

    let embeddings = word_vectors(cfg, &mut rng)?;
    Ok(SyntheticCity { graph: g, embeddings })
}

fn capital(w: &str) -> String {
    let mut cs = w.chars();
    cs.next()
        .map(|f| f.to_uppercase().chain(cs).collect())
        .unwrap_or_default()
}

/// Street words encode the row in the first half of the vector and avenue
/// words the column in the second half, as low-frequency sinusoids.
fn word_vectors(cfg: &GridCityConfig, rng: &mut ChaCha8Rng) -> Result<EmbeddingProvider, SyntheticError> {
    let dim = cfg.word_dim;
    let half = dim / 2;
    let wave = |pos: f64, span: f64, slot: usize| {
        let f = (slot / 2 + 1) as f64 * std::f64::consts::PI / (2.0 * span);
        if slot % 2 == 0 { (f * pos).cos() } else { (f * pos).sin() }
    };
    let mut emb = EmbeddingProvider::new(dim);
    for (r, w) in STREETS.iter().take(cfg.rows).enumerate() {
        let mut v = vec![0.0; dim];
        for (s, x) in v.iter_mut().take(half).enumerate() {
            *x = wave(r as f64, cfg.rows as f64, s) + rng.gen_range(-0.05..0.05);
        }
        emb.insert(w, v)?;
    }
    for (c, w) in AVENUES.iter().take(cfg.cols).enumerate() {
        let mut v = vec![0.0; dim];
        for (s, x) in v.iter_mut().skip(half).enumerate() {
            *x = wave(c as f64, cfg.cols as f64, s) + rng.gen_range(-0.05..0.05);
        }
        emb.insert(w, v)?;
    }
    for w in LANDMARK_KINDS.iter().chain(&["quarter"]) {
        emb.insert(w, (0..dim).map(|_| rng.gen_range(-0.3..0.3)).collect())?;
    }
    Ok(emb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{haversine_km, GraphView, NodeKind};

    #[test]
    fn default_city_meets_size_floor() {
        let city = grid_city(&GridCityConfig::default()).unwrap();
        let s = city.graph.stats();
        assert_eq!(s.n_place, 156);
        assert!(s.n_knowledge >= 100, "{}", s.n_knowledge);
        assert!(s.n_place_place_links > 400);
        assert!(city.graph.check_index_consistency());
    }

    #[test]
    fn seeded_and_reproducible() {
        let a = grid_city(&GridCityConfig::default()).unwrap();
        let b = grid_city(&GridCityConfig::default()).unwrap();
        assert_eq!(a.graph.triples().collect::<Vec<_>>(), b.graph.triples().collect::<Vec<_>>());
        assert_eq!(a.embeddings.to_text(), b.embeddings.to_text());
        let c = grid_city(&GridCityConfig { seed: 8, ..Default::default() }).unwrap();
        assert_ne!(a.graph.triples().collect::<Vec<_>>(), c.graph.triples().collect::<Vec<_>>());
    }

    #[test]
    fn lattice_spacing_is_close_to_configured() {
        let cfg = GridCityConfig { jitter: 0.0, ..Default::default() };
        let city = grid_city(&cfg).unwrap();
        let g = &city.graph;
        let at = |r, c| g.geo_at(g.index_of(&place_id(r, c)).unwrap()).unwrap();
        assert!((haversine_km(at(0, 0), at(1, 0)) - 0.25).abs() < 1e-9);
        assert!((haversine_km(at(0, 0), at(0, 1)) - 0.25).abs() < 1e-3);
        assert!(g.entities().iter().all(|e| e.kind == NodeKind::Knowledge || e.geo.is_some()));
    }

    #[test]
    fn titles_have_vectors() {
        let city = grid_city(&GridCityConfig::default()).unwrap();
        for e in city.graph.entities() {
            let v = city.embeddings.title_embed(&e.title);
            assert!(v.iter().any(|x| *x != 0.0), "{}", e.title);
        }
    }

    #[test]
    fn rejects_oversized_grid() {
        let cfg = GridCityConfig { rows: 40, ..Default::default() };
        assert!(matches!(grid_city(&cfg), Err(SyntheticError::Invalid(_))));
    }
}
