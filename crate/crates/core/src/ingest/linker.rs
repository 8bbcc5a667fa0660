//! Cross-source linking of Europeana titles to Wikidata entities.
//!
//! The gazetteer is the set of Wikidata entity titles in the graph. A
//! Europeana title mentions an entry when the entry's folded token sequence
//! appears contiguously in the folded Europeana title. Entries shorter than
//! two tokens and four characters are ignored.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::kg::{EntityId, KgError, KnowledgeGraph, NodeKind, Source, Triple};
use crate::text::folded_tokens;

pub const RELATED_TO: &str = "related_to";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SpanKind {
    #[serde(rename = "GPE")]
    Gpe,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "FAC")]
    Fac,
    #[serde(rename = "PER")]
    Per,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct LinkCandidate {
    pub europeana_id: EntityId,
    pub wikidata_id: EntityId,
    pub matched_span: String,
    pub span_kind: SpanKind,
}

const GPE_TYPES: &[&str] = &[
    "city", "town", "village", "country", "state", "province", "municipality", "region",
    "district", "neighbourhood", "neighborhood",
];
const FAC_TYPES: &[&str] = &[
    "building", "museum", "church", "cathedral", "basilica", "station", "bridge", "tower",
    "airport", "palace", "castle", "theatre", "theater", "monument", "fountain", "library",
];
const PERSON_TYPES: &[&str] = &["human", "person", "Q5"];

fn matches_any(value: &str, list: &[&str]) -> bool {
    value
        .split(',')
        .map(str::trim)
        .any(|v| list.iter().any(|t| t.eq_ignore_ascii_case(v)))
}

fn span_kind(g: &KnowledgeGraph, ix: usize) -> SpanKind {
    let e = g.entity(ix);
    let types: Vec<&str> = ["instance_of", "subclass_of", "P31", "P279"]
        .iter()
        .filter_map(|k| e.properties.get(*k).map(String::as_str))
        .collect();
    let typed_as = |list: &[&str]| types.iter().any(|t| matches_any(t, list));
    let person_edge = crate::kg::GraphView::out_edges(g, ix).iter().any(|&(t, r)| {
        let label = g.relation_label(r);
        let target = g.entity(t);
        (label == "P31" || label == "instance_of")
            && (matches_any(target.id.as_str(), PERSON_TYPES) || matches_any(&target.title, PERSON_TYPES))
    });
    if e.kind == NodeKind::Knowledge && (person_edge || typed_as(PERSON_TYPES)) {
        SpanKind::Per
    } else if typed_as(GPE_TYPES) {
        SpanKind::Gpe
    } else if typed_as(FAC_TYPES) {
        SpanKind::Fac
    } else if e.kind == NodeKind::Place {
        SpanKind::Fac
    } else {
        SpanKind::Loc
    }
}

fn eligible(tokens: &[String]) -> bool {
    match tokens {
        [] => false,
        [single] => single.chars().count() >= 4,
        _ => true,
    }
}

/// Finds all title mentions and adds one `related_to` triple
/// `(europeana, related_to, wikidata)` per candidate. Output is sorted by
/// `(europeana_id, wikidata_id)`.
pub fn link_by_title(g: &mut KnowledgeGraph) -> Result<Vec<LinkCandidate>, KgError> {
    // first token → (entity index, folded tokens)
    let mut gazetteer: HashMap<String, Vec<(usize, Vec<String>)>> = HashMap::new();
    for (ix, e) in g.entities().iter().enumerate() {
        if e.source != Source::Wikidata {
            continue;
        }
        let tokens = folded_tokens(&e.title);
        if eligible(&tokens) {
            gazetteer.entry(tokens[0].clone()).or_default().push((ix, tokens));
        }
    }

    let mut found: BTreeSet<(EntityId, EntityId, String, usize)> = BTreeSet::new();
    for e in g.entities() {
        if e.source != Source::Europeana {
            continue;
        }
        let tokens = folded_tokens(&e.title);
        for start in 0..tokens.len() {
            let Some(entries) = gazetteer.get(&tokens[start]) else { continue };
            for (wix, wtokens) in entries {
                let end = start + wtokens.len();
                if end <= tokens.len() && tokens[start..end] == wtokens[..] {
                    let wd = g.entity(*wix);
                    found.insert((e.id.clone(), wd.id.clone(), wtokens.join(" "), *wix));
                }
            }
        }
    }

    let mut out: Vec<LinkCandidate> = Vec::new();
    for (eu, wd, span, wix) in found {
        // one candidate per id pair; keep the span seen first in sort order
        if out
            .last()
            .is_some_and(|c| c.europeana_id == eu && c.wikidata_id == wd)
        {
            continue;
        }
        let kind = span_kind(g, wix);
        g.add_triple(&Triple::new(&eu, RELATED_TO, &wd))?;
        out.push(LinkCandidate {
            europeana_id: eu,
            wikidata_id: wd,
            matched_span: span,
            span_kind: kind,
        });
    }
    Ok(out)
}
