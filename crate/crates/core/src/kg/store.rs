//! Line-oriented graph persistence: `nodes.jsonl` + `edges.jsonl`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Entity, EntityId, GeoPoint, KgError, KnowledgeGraph, NodeKind, Source, Triple};

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.jsonl";

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    kind: NodeKind,
    #[serde(default)]
    title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(default = "default_source")]
    source: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    props: BTreeMap<String, String>,
}

fn default_source() -> String {
    "other".into()
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    head: String,
    rel: String,
    tail: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KgError + '_ {
    move |source| KgError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `nodes.jsonl` and `edges.jsonl` into `dir`, creating it if needed.
pub fn save(g: &KnowledgeGraph, dir: &Path) -> Result<(), KgError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let nodes_path = dir.join(NODES_FILE);
    let mut w = BufWriter::new(File::create(&nodes_path).map_err(io_err(&nodes_path))?);
    for e in g.entities() {
        let rec = NodeRecord {
            id: e.id.as_str().to_string(),
            kind: e.kind,
            title: e.title.clone(),
            lat: e.geo.map(|p| p.lat()),
            lon: e.geo.map(|p| p.lon()),
            source: e.source.as_str().to_string(),
            props: e.properties.clone(),
        };
        let line = serde_json::to_string(&rec).expect("node record serializes");
        writeln!(w, "{line}").map_err(io_err(&nodes_path))?;
    }
    w.flush().map_err(io_err(&nodes_path))?;

    let edges_path = dir.join(EDGES_FILE);
    let mut w = BufWriter::new(File::create(&edges_path).map_err(io_err(&edges_path))?);
    for t in g.triples() {
        let rec = EdgeRecord {
            head: t.head.into(),
            rel: t.relation,
            tail: t.tail.into(),
        };
        let line = serde_json::to_string(&rec).expect("edge record serializes");
        writeln!(w, "{line}").map_err(io_err(&edges_path))?;
    }
    w.flush().map_err(io_err(&edges_path))?;
    Ok(())
}

/// Calls `f(line_number, line)` for each non-blank line; line numbers are 1-based.
pub(crate) fn for_each_line(
    path: &Path,
    mut f: impl FnMut(usize, &str) -> Result<(), KgError>,
) -> Result<(), KgError> {
    let file = File::open(path).map_err(io_err(path))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        f(i + 1, &line)?;
    }
    Ok(())
}

fn malformed(path: &Path, line: usize, reason: impl ToString) -> KgError {
    KgError::MalformedRecord {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    }
}

fn parse_node(path: &Path, line_no: usize, line: &str) -> Result<Entity, KgError> {
    let rec: NodeRecord = serde_json::from_str(line).map_err(|e| malformed(path, line_no, e))?;
    let id = EntityId::new(rec.id).map_err(|e| malformed(path, line_no, e))?;
    let geo = match (rec.lat, rec.lon) {
        (Some(lat), Some(lon)) => {
            Some(GeoPoint::new(lat, lon).map_err(|e| malformed(path, line_no, e))?)
        }
        (None, None) => None,
        _ => return Err(malformed(path, line_no, "lat and lon must be given together")),
    };
    if rec.kind == NodeKind::Knowledge && geo.is_some() {
        return Err(malformed(path, line_no, "knowledge nodes cannot carry coordinates"));
    }
    Ok(Entity {
        id,
        title: rec.title,
        kind: rec.kind,
        geo,
        source: Source::parse(&rec.source),
        properties: rec.props,
    })
}

/// Reads a graph written by [`save`].
pub fn load(dir: &Path) -> Result<KnowledgeGraph, KgError> {
    let mut g = KnowledgeGraph::new();
    let nodes_path: PathBuf = dir.join(NODES_FILE);
    for_each_line(&nodes_path, |n, line| {
        let e = parse_node(&nodes_path, n, line)?;
        g.add_entity(e).map_err(|e| malformed(&nodes_path, n, e))?;
        Ok(())
    })?;

    let edges_path = dir.join(EDGES_FILE);
    for_each_line(&edges_path, |n, line| {
        let rec: EdgeRecord =
            serde_json::from_str(line).map_err(|e| malformed(&edges_path, n, e))?;
        let head = EntityId::new(rec.head).map_err(|e| malformed(&edges_path, n, e))?;
        let tail = EntityId::new(rec.tail).map_err(|e| malformed(&edges_path, n, e))?;
        g.add_triple(&Triple::new(&head, rec.rel, &tail))
            .map_err(|e| malformed(&edges_path, n, e))?;
        Ok(())
    })?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, nodes: &str, edges: &str) {
        std::fs::write(dir.join(NODES_FILE), nodes).unwrap();
        std::fs::write(dir.join(EDGES_FILE), edges).unwrap();
    }

    #[test]
    fn empty_files_give_empty_graph() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "", "");
        let g = load(dir.path()).unwrap();
        assert_eq!(g.node_count_for_test(), 0);
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "{\"id\":\"A\",\"kind\":\"place\",\"title\":\"a\"}\n{\"id\":\"B\",\"kind\":\"pla\n",
            "",
        );
        match load(dir.path()) {
            Err(KgError::MalformedRecord { line, path, .. }) => {
                assert_eq!(line, 2);
                assert!(path.ends_with(NODES_FILE));
            }
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_ignored_and_half_coordinates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "{\"kind\":\"place\",\"id\":\"A\",\"extra\":[1,2],\"title\":\"a\",\"lat\":1,\"lon\":2}\n",
            "",
        );
        let g = load(dir.path()).unwrap();
        assert_eq!(g.get(&EntityId::new("A").unwrap()).unwrap().geo.unwrap().lon(), 2.0);

        write(dir.path(), "{\"id\":\"A\",\"kind\":\"place\",\"lat\":1}\n", "");
        assert!(matches!(load(dir.path()), Err(KgError::MalformedRecord { line: 1, .. })));
    }

    #[test]
    fn dangling_edge_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "{\"id\":\"A\",\"kind\":\"place\"}\n",
            "{\"head\":\"A\",\"rel\":\"r\",\"tail\":\"A\"}\n{\"head\":\"A\",\"rel\":\"r\",\"tail\":\"B\"}\n",
        );
        assert!(matches!(load(dir.path()), Err(KgError::MalformedRecord { line: 2, .. })));
    }

    #[test]
    fn missing_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load(&dir.path().join("nope")), Err(KgError::Io { .. })));
    }

    impl KnowledgeGraph {
        fn node_count_for_test(&self) -> usize {
            self.entities().len()
        }
    }
}
