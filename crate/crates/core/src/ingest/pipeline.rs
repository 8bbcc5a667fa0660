use serde::Serialize;

use super::offline::OfflineDumps;
use super::{
    expand_hops, ingest_europeana, ingest_places, link_by_title, resolve_bbox, BboxProvider,
    CityScope, DataSource, ExpandReport, IngestConfig, IngestError, ItemIngestReport, ItemSource,
    LinkCandidate, PlaceIngestReport, PlaceSource, StatementSource,
};
use crate::kg::KnowledgeGraph;

/// One provider per ingestion step.
pub struct Sources<'a> {
    pub bbox: &'a dyn BboxProvider,
    pub places: &'a dyn PlaceSource,
    pub statements: &'a dyn StatementSource,
    pub items: Option<&'a dyn ItemSource>,
}

impl<'a> Sources<'a> {
    pub fn offline(d: &'a OfflineDumps) -> Self {
        Self {
            bbox: &d.bbox,
            places: &d.places,
            statements: &d.statements,
            items: d.items.as_ref().map(|i| i as &dyn ItemSource),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub scope: CityScope,
    pub places: Option<PlaceIngestReport>,
    pub items: Option<ItemIngestReport>,
    pub expansion: ExpandReport,
    pub links: Vec<LinkCandidate>,
}

/// Runs the whole workflow for `city` into `g`. Steps whose source is not
/// enabled in `cfg.sources` are skipped; linking needs both sources.
pub fn ingest_city(
    city: &str,
    cfg: &IngestConfig,
    sources: &Sources<'_>,
    g: &mut KnowledgeGraph,
) -> Result<IngestSummary, IngestError> {
    let scope = resolve_bbox(city, sources.bbox)?;
    let wikidata = cfg.sources.contains(&DataSource::Wikidata);
    let europeana = cfg.sources.contains(&DataSource::Europeana);

    let places = if wikidata {
        Some(ingest_places(&scope, cfg, sources.places, g)?)
    } else {
        None
    };
    let items = match (europeana, sources.items) {
        (true, Some(src)) => Some(ingest_europeana(&scope, src, g)?),
        (true, None) => {
            log::warn!("europeana enabled but no item source configured");
            None
        }
        _ => None,
    };
    let expansion = if wikidata {
        expand_hops(g, cfg, sources.statements)?
    } else {
        ExpandReport::default()
    };
    let links = if wikidata && items.is_some() { link_by_title(g)? } else { Vec::new() };
    Ok(IngestSummary {
        scope,
        places,
        items,
        expansion,
        links,
    })
}
