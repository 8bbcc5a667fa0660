//! Offline dump files.
//!
//! | file                        | one line per                                              |
//! |-----------------------------|-----------------------------------------------------------|
//! | `bbox_table.tsv`            | `city<TAB>min_lat<TAB>min_lon<TAB>max_lat<TAB>max_lon`     |
//! | `wikidata_places.jsonl`     | `{id, title, lat, lon, instance_of?, subclass_of?, props?, statements?}` |
//! | `wikidata_statements.jsonl` | `{id, title?, props?, statements: [{rel, target} \| {rel, literal}]}` |
//! | `europeana_items.jsonl`     | `{id, title, lat?, lon?, props?}`                         |
//!
//! Lines starting with `#` in the TSV are comments; blank lines are skipped
//! everywhere.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    BboxProvider, CityScope, IngestError, ItemSource, PlaceSource, RawKnowledgeRecord,
    RawPlaceRecord, Statement, StatementSource, StatementValue,
};
use crate::kg::{EntityId, GeoPoint};

pub const BBOX_TABLE: &str = "bbox_table.tsv";
pub const WIKIDATA_PLACES: &str = "wikidata_places.jsonl";
pub const WIKIDATA_STATEMENTS: &str = "wikidata_statements.jsonl";
pub const EUROPEANA_ITEMS: &str = "europeana_items.jsonl";

fn read(path: &Path) -> Result<String, IngestError> {
    if !path.exists() {
        return Err(IngestError::MissingDump(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| IngestError::Source(format!("{}: {e}", path.display())))
}

fn malformed(path: &Path, line: usize, reason: impl ToString) -> IngestError {
    IngestError::MalformedRecord {
        source_name: path.display().to_string(),
        item: line,
        reason: reason.to_string(),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// `city → bbox` lookup table.
#[derive(Debug, Clone, Default)]
pub struct BboxTable {
    rows: Vec<CityScope>,
}

impl BboxTable {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        let mut rows = Vec::new();
        for (n, line) in lines(&text) {
            if line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(malformed(path, n, "expected 5 tab-separated columns"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| malformed(path, n, e));
            let scope = CityScope::new(
                cols[0].trim(),
                num(cols[1])?,
                num(cols[2])?,
                num(cols[3])?,
                num(cols[4])?,
            )
            .map_err(|e| malformed(path, n, e))?;
            rows.push(scope);
        }
        Ok(Self { rows })
    }
}

impl BboxProvider for BboxTable {
    fn resolve(&self, city: &str) -> Result<CityScope, IngestError> {
        let wanted = city.trim().to_lowercase();
        self.rows
            .iter()
            .find(|s| s.name.to_lowercase() == wanted)
            .cloned()
            .ok_or_else(|| IngestError::CityNotFound(city.to_string()))
    }
}

#[derive(Deserialize)]
struct StatementLine {
    rel: String,
    target: Option<String>,
    literal: Option<String>,
}

#[derive(Deserialize)]
struct PlaceLine {
    id: String,
    #[serde(default)]
    title: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    instance_of: Vec<String>,
    #[serde(default)]
    subclass_of: Vec<String>,
    #[serde(default)]
    props: BTreeMap<String, String>,
    #[serde(default)]
    statements: Vec<StatementLine>,
}

#[derive(Deserialize)]
struct StatementsLine {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    props: BTreeMap<String, String>,
    #[serde(default)]
    statements: Vec<StatementLine>,
}

fn convert_statements(
    path: &Path,
    n: usize,
    raw: Vec<StatementLine>,
) -> Result<Vec<Statement>, IngestError> {
    raw.into_iter()
        .map(|s| {
            let value = match (s.target, s.literal) {
                (Some(t), None) => {
                    StatementValue::Target(EntityId::new(t).map_err(|e| malformed(path, n, e))?)
                }
                (None, Some(l)) => StatementValue::Literal(l),
                _ => return Err(malformed(path, n, "statement needs exactly one of target/literal")),
            };
            Ok(Statement { rel: s.rel, value })
        })
        .collect()
}

/// Wikidata place list read from `wikidata_places.jsonl`.
#[derive(Debug, Clone, Default)]
pub struct PlaceDump {
    records: Vec<RawPlaceRecord>,
}

impl PlaceDump {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        let mut records = Vec::new();
        for (n, line) in lines(&text) {
            let rec: PlaceLine = serde_json::from_str(line).map_err(|e| malformed(path, n, e))?;
            records.push(RawPlaceRecord {
                id: EntityId::new(rec.id).map_err(|e| malformed(path, n, e))?,
                title: rec.title,
                geo: GeoPoint::new(rec.lat, rec.lon).map_err(|e| malformed(path, n, e))?,
                instance_of: rec.instance_of,
                subclass_of: rec.subclass_of,
                properties: rec.props,
                statements: convert_statements(path, n, rec.statements)?,
            });
        }
        Ok(Self { records })
    }
}

impl PlaceSource for PlaceDump {
    fn places(&self, _scope: &CityScope) -> Result<Vec<RawPlaceRecord>, IngestError> {
        Ok(self.records.clone())
    }
}

/// Statement index read from `wikidata_statements.jsonl`, with a reverse
/// index for undirected expansion.
#[derive(Debug, Clone, Default)]
pub struct StatementDump {
    records: HashMap<EntityId, RawKnowledgeRecord>,
    reverse: HashMap<EntityId, Vec<(EntityId, String)>>,
}

impl StatementDump {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        let mut dump = Self::default();
        for (n, line) in lines(&text) {
            let rec: StatementsLine =
                serde_json::from_str(line).map_err(|e| malformed(path, n, e))?;
            let id = EntityId::new(rec.id).map_err(|e| malformed(path, n, e))?;
            let statements = convert_statements(path, n, rec.statements)?;
            for s in &statements {
                if let StatementValue::Target(t) = &s.value {
                    dump.reverse
                        .entry(t.clone())
                        .or_default()
                        .push((id.clone(), s.rel.clone()));
                }
            }
            let record = RawKnowledgeRecord {
                id: id.clone(),
                title: rec.title,
                geo: None,
                properties: rec.props,
                statements,
            };
            if dump.records.insert(id, record).is_some() {
                return Err(malformed(path, n, "duplicate id"));
            }
        }
        Ok(dump)
    }
}

impl StatementSource for StatementDump {
    fn lookup(&self, id: &EntityId) -> Result<Option<RawKnowledgeRecord>, IngestError> {
        Ok(self.records.get(id).cloned())
    }

    fn referencing(&self, id: &EntityId) -> Result<Vec<(EntityId, String)>, IngestError> {
        Ok(self.reverse.get(id).cloned().unwrap_or_default())
    }
}

/// Europeana items read from `europeana_items.jsonl`. A line that is not
/// valid JSON is reported with its 1-based line number.
#[derive(Debug, Clone, Default)]
pub struct ItemDump {
    items: Vec<serde_json::Value>,
}

impl ItemDump {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        let items = lines(&text)
            .map(|(n, line)| serde_json::from_str(line).map_err(|e| malformed(path, n, e)))
            .collect::<Result<_, _>>()?;
        Ok(Self { items })
    }
}

impl ItemSource for ItemDump {
    fn items(&self, _scope: &CityScope) -> Result<Vec<serde_json::Value>, IngestError> {
        Ok(self.items.clone())
    }
}

/// All dump files of one directory.
pub struct OfflineDumps {
    pub dir: PathBuf,
    pub bbox: BboxTable,
    pub places: PlaceDump,
    pub statements: StatementDump,
    pub items: Option<ItemDump>,
}

impl OfflineDumps {
    /// Loads every dump; the Europeana file is only required when `with_items`.
    pub fn open(dir: &Path, with_items: bool) -> Result<Self, IngestError> {
        Ok(Self {
            dir: dir.to_path_buf(),
            bbox: BboxTable::load(&dir.join(BBOX_TABLE))?,
            places: PlaceDump::load(&dir.join(WIKIDATA_PLACES))?,
            statements: StatementDump::load(&dir.join(WIKIDATA_STATEMENTS))?,
            items: if with_items {
                Some(ItemDump::load(&dir.join(EUROPEANA_ITEMS))?)
            } else {
                None
            },
        })
    }
}
