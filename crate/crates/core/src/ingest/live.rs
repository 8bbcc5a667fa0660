//! Thin HTTP clients for the live sources.
//!
//! Request shapes:
//!
//! * bbox: `GET {nominatim}/search?q=CITY&format=json&limit=1`, reading
//!   `boundingbox = [min_lat, max_lat, min_lon, max_lon]` of the first hit.
//! * places: `GET {sparql}?query=Q&format=json` where `Q` selects items with
//!   `wdt:P625` inside a `wikibase:box` service call.
//! * statements: same endpoint; direct-property statements of one item, and
//!   direct-property statements pointing at it.
//! * items: `GET {europeana}/record/v2/search.json?wskey=KEY&query=*&qf=..`
//!   with latitude/longitude range facets.
//!
//! Every request goes through one [`RetryPolicy`].

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::Value;

use super::{
    BboxProvider, CityScope, IngestError, ItemSource, PlaceSource, RawKnowledgeRecord,
    RawPlaceRecord, Statement, StatementSource, StatementValue,
};
use crate::kg::{EntityId, GeoPoint};

const ENTITY_PREFIX: &str = "http://www.wikidata.org/entity/";
const DIRECT_PREFIX: &str = "http://www.wikidata.org/prop/direct/";

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Runs `op` until it succeeds or the attempts are used up, sleeping
    /// `initial_backoff · 2^i` after failed attempt `i`.
    pub fn run<T>(
        &self,
        provider: &str,
        mut op: impl FnMut() -> Result<T, String>,
    ) -> Result<T, IngestError> {
        let mut backoff = self.initial_backoff;
        let mut last = String::from("no attempts made");
        for attempt in 1..=self.attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("{provider}: attempt {attempt}/{} failed: {e}", self.attempts);
                    last = e;
                }
            }
            if attempt < self.attempts {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(IngestError::ProviderUnavailable {
            provider: provider.to_string(),
            cause: last,
        })
    }
}

#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    pub policy: RetryPolicy,
    user_agent: String,
}

impl HttpClient {
    pub fn new(policy: RetryPolicy, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            policy,
            user_agent: concat!("geokg/", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }

    pub fn get_json(
        &self,
        provider: &str,
        url: &str,
        query: &[(&str, &str)],
    ) -> Result<Value, IngestError> {
        let body = self.policy.run(provider, || {
            let mut req = self
                .agent
                .get(url)
                .header("User-Agent", &self.user_agent)
                .header("Accept", "application/json");
            for (k, v) in query {
                req = req.query(*k, *v);
            }
            let mut resp = req.call().map_err(|e| e.to_string())?;
            resp.body_mut().read_to_string().map_err(|e| e.to_string())
        })?;
        serde_json::from_str(&body).map_err(|e| IngestError::MalformedRecord {
            source_name: provider.to_string(),
            item: 0,
            reason: e.to_string(),
        })
    }
}

impl Default for HttpClient {
    fn default() -> Self {
        Self::new(RetryPolicy::default(), Duration::from_secs(30))
    }
}

fn bad(provider: &str, item: usize, reason: impl ToString) -> IngestError {
    IngestError::MalformedRecord {
        source_name: provider.to_string(),
        item,
        reason: reason.to_string(),
    }
}

pub struct NominatimBbox {
    pub base_url: String,
    pub http: HttpClient,
}

/// Reads the first hit of a Nominatim search response.
pub fn parse_nominatim(city: &str, body: &Value) -> Result<CityScope, IngestError> {
    let Some(hit) = body.as_array().and_then(|a| a.first()) else {
        return Err(IngestError::CityNotFound(city.to_string()));
    };
    let bb = hit
        .get("boundingbox")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 4)
        .ok_or_else(|| bad("nominatim", 0, "missing boundingbox"))?;
    let mut v = [0.0; 4];
    for (slot, raw) in v.iter_mut().zip(bb) {
        *slot = match raw {
            Value::String(s) => s.parse().map_err(|e| bad("nominatim", 0, e))?,
            Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
            _ => return Err(bad("nominatim", 0, "non-numeric bbox entry")),
        };
    }
    CityScope::new(city, v[0], v[2], v[1], v[3])
}

impl BboxProvider for NominatimBbox {
    fn resolve(&self, city: &str) -> Result<CityScope, IngestError> {
        let url = format!("{}/search", self.base_url.trim_end_matches('/'));
        let body = self
            .http
            .get_json("nominatim", &url, &[("q", city), ("format", "json"), ("limit", "1")])?;
        parse_nominatim(city, &body)
    }
}

pub struct WikidataSparql {
    pub endpoint: String,
    pub http: HttpClient,
}

impl WikidataSparql {
    fn select(&self, query: &str) -> Result<Vec<Value>, IngestError> {
        let body = self
            .http
            .get_json("wikidata", &self.endpoint, &[("query", query), ("format", "json")])?;
        body.pointer("/results/bindings")
            .and_then(Value::as_array)
            .cloned()
            .ok_or_else(|| bad("wikidata", 0, "missing results.bindings"))
    }
}

fn binding<'a>(row: &'a Value, var: &str) -> Option<&'a str> {
    row.get(var)?.get("value")?.as_str()
}

fn entity_of(uri: &str) -> Option<&str> {
    uri.strip_prefix(ENTITY_PREFIX)
}

/// Parses a WKT `Point(lon lat)` literal.
pub fn parse_wkt_point(s: &str) -> Option<GeoPoint> {
    let inner = s.trim().strip_prefix("Point(")?.strip_suffix(')')?;
    let mut it = inner.split_whitespace();
    let lon: f64 = it.next()?.parse().ok()?;
    let lat: f64 = it.next()?.parse().ok()?;
    GeoPoint::new(lat, lon).ok()
}

pub fn places_query(scope: &CityScope) -> String {
    format!(
        "SELECT ?item ?itemLabel ?coord ?instance ?subclass WHERE {{\n\
         SERVICE wikibase:box {{\n\
         ?item wdt:P625 ?coord .\n\
         bd:serviceParam wikibase:cornerSouthWest \"Point({} {})\"^^geo:wktLiteral .\n\
         bd:serviceParam wikibase:cornerNorthEast \"Point({} {})\"^^geo:wktLiteral .\n\
         }}\n\
         OPTIONAL {{ ?item wdt:P31 ?instance . }}\n\
         OPTIONAL {{ ?item wdt:P279 ?subclass . }}\n\
         SERVICE wikibase:label {{ bd:serviceParam wikibase:language \"en\" . }}\n\
         }}",
        scope.min_lon, scope.min_lat, scope.max_lon, scope.max_lat
    )
}

/// Groups SPARQL rows by item; the first coordinate seen wins.
pub fn parse_place_bindings(rows: &[Value]) -> Result<Vec<RawPlaceRecord>, IngestError> {
    let mut by_id: BTreeMap<String, RawPlaceRecord> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let uri = binding(row, "item").ok_or_else(|| bad("wikidata", i, "row without ?item"))?;
        let Some(id) = entity_of(uri) else { continue };
        let Some(geo) = binding(row, "coord").and_then(parse_wkt_point) else {
            log::warn!("wikidata: skipping {id}, unparsable coordinate");
            continue;
        };
        let rec = match by_id.entry(id.to_string()) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(RawPlaceRecord {
                id: EntityId::new(id).map_err(|e| bad("wikidata", i, e))?,
                title: binding(row, "itemLabel").unwrap_or_default().to_string(),
                geo,
                instance_of: vec![],
                subclass_of: vec![],
                properties: BTreeMap::new(),
                statements: vec![],
            }),
        };
        for (var, list) in [("instance", &mut rec.instance_of), ("subclass", &mut rec.subclass_of)] {
            if let Some(class) = binding(row, var).and_then(entity_of) {
                if !list.iter().any(|c| c == class) {
                    list.push(class.to_string());
                }
            }
        }
    }
    Ok(by_id.into_values().collect())
}

/// Turns `?p ?o` rows into statements. Entity-valued objects become targets,
/// everything else a literal.
pub fn parse_statement_bindings(rows: &[Value]) -> Vec<Statement> {
    let mut out = Vec::new();
    for row in rows {
        let (Some(p), Some(o)) = (binding(row, "p"), binding(row, "o")) else { continue };
        let Some(rel) = p.strip_prefix(DIRECT_PREFIX) else { continue };
        let is_uri = row.pointer("/o/type").and_then(Value::as_str) == Some("uri");
        let value = match entity_of(o).filter(|_| is_uri).and_then(|t| EntityId::new(t).ok()) {
            Some(t) => StatementValue::Target(t),
            None if is_uri => continue,
            None => StatementValue::Literal(o.to_string()),
        };
        out.push(Statement {
            rel: rel.to_string(),
            value,
        });
    }
    out
}

impl PlaceSource for WikidataSparql {
    fn places(&self, scope: &CityScope) -> Result<Vec<RawPlaceRecord>, IngestError> {
        parse_place_bindings(&self.select(&places_query(scope))?)
    }
}

impl StatementSource for WikidataSparql {
    fn lookup(&self, id: &EntityId) -> Result<Option<RawKnowledgeRecord>, IngestError> {
        let q = format!(
            "SELECT ?label ?p ?o WHERE {{\n\
             OPTIONAL {{ wd:{id} rdfs:label ?label . FILTER(LANG(?label) = \"en\") }}\n\
             OPTIONAL {{ wd:{id} ?p ?o . FILTER(STRSTARTS(STR(?p), \"{DIRECT_PREFIX}\")) }}\n\
             }}"
        );
        let rows = self.select(&q)?;
        if rows.is_empty() {
            return Ok(None);
        }
        let title = rows.iter().find_map(|r| binding(r, "label")).unwrap_or_default();
        Ok(Some(RawKnowledgeRecord {
            id: id.clone(),
            title: title.to_string(),
            geo: None,
            properties: BTreeMap::new(),
            statements: parse_statement_bindings(&rows),
        }))
    }

    fn referencing(&self, id: &EntityId) -> Result<Vec<(EntityId, String)>, IngestError> {
        let q = format!(
            "SELECT ?s ?p WHERE {{ ?s ?p wd:{id} . FILTER(STRSTARTS(STR(?p), \"{DIRECT_PREFIX}\")) }} LIMIT 500"
        );
        let rows = self.select(&q)?;
        Ok(rows
            .iter()
            .filter_map(|r| {
                let s = EntityId::new(entity_of(binding(r, "s")?)?).ok()?;
                let p = binding(r, "p")?.strip_prefix(DIRECT_PREFIX)?;
                Some((s, p.to_string()))
            })
            .collect())
    }
}

pub struct EuropeanaSearch {
    pub base_url: String,
    pub api_key: String,
    pub rows: usize,
    pub http: HttpClient,
}

fn first_str(v: &Value, key: &str) -> Option<String> {
    match v.get(key)? {
        Value::Array(a) => a.first()?.as_str().map(str::to_string),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

/// Maps a search response to item objects in the shape the ingester reads.
pub fn parse_europeana_items(body: &Value) -> Result<Vec<Value>, IngestError> {
    let items = body
        .get("items")
        .map(|v| v.as_array().cloned().ok_or_else(|| bad("europeana", 0, "items is not a list")))
        .transpose()?
        .unwrap_or_default();
    let mut out = Vec::with_capacity(items.len());
    for (i, it) in items.iter().enumerate() {
        let raw_id = it
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("europeana", i, "item without id"))?;
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), format!("EU:{}", raw_id.trim_start_matches('/')).into());
        obj.insert("title".into(), first_str(it, "title").unwrap_or_default().into());
        let coord = |k| first_str(it, k).and_then(|s| s.parse::<f64>().ok());
        if let (Some(lat), Some(lon)) = (coord("edmPlaceLatitude"), coord("edmPlaceLongitude")) {
            obj.insert("lat".into(), lat.into());
            obj.insert("lon".into(), lon.into());
        }
        out.push(Value::Object(obj));
    }
    Ok(out)
}

impl ItemSource for EuropeanaSearch {
    fn items(&self, scope: &CityScope) -> Result<Vec<Value>, IngestError> {
        let url = format!("{}/record/v2/search.json", self.base_url.trim_end_matches('/'));
        let lat = format!("pl_wgs84_pos_lat:[{} TO {}]", scope.min_lat, scope.max_lat);
        let lon = format!("pl_wgs84_pos_long:[{} TO {}]", scope.min_lon, scope.max_lon);
        let rows = self.rows.to_string();
        let body = self.http.get_json(
            "europeana",
            &url,
            &[
                ("wskey", &self.api_key),
                ("query", "*"),
                ("qf", &lat),
                ("qf", &lon),
                ("rows", &rows),
            ],
        )?;
        parse_europeana_items(&body)
    }
}
