mod common;

use common::linker_fixture;
use geokg::ingest::{link_by_title, SpanKind, RELATED_TO};

#[test]
fn produces_exactly_the_expected_triples() {
    let (mut g, expected) = linker_fixture();
    let links = link_by_title(&mut g).unwrap();
    let got: Vec<(String, String)> = links
        .iter()
        .map(|c| (c.europeana_id.to_string(), c.wikidata_id.to_string()))
        .collect();
    assert_eq!(got, expected);
    let mut triples: Vec<(String, String)> = g
        .triples()
        .filter(|t| t.relation == RELATED_TO)
        .map(|t| (t.head.to_string(), t.tail.to_string()))
        .collect();
    triples.sort();
    assert_eq!(triples, expected);
}

#[test]
fn spans_and_kinds() {
    let (mut g, _) = linker_fixture();
    let links = link_by_title(&mut g).unwrap();
    let find = |e: &str, w: &str| {
        links
            .iter()
            .find(|c| c.europeana_id.as_str() == e && c.wikidata_id.as_str() == w)
            .unwrap()
    };
    let amaya = find("E1", "W1");
    assert_eq!(amaya.span_kind, SpanKind::Per);
    assert_eq!(amaya.matched_span, "carmen amaya");
    assert_eq!(find("E2", "W2").matched_span, "sagrada familia");
    assert_eq!(find("E3", "W4").span_kind, SpanKind::Fac);
}

#[test]
fn second_pass_is_idempotent() {
    let (mut g, expected) = linker_fixture();
    link_by_title(&mut g).unwrap();
    let n = g.triple_count();
    let again = link_by_title(&mut g).unwrap();
    assert_eq!(again.len(), expected.len());
    assert_eq!(g.triple_count(), n);
}
