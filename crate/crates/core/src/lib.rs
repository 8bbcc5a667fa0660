//! Geolocalized knowledge graphs and multi-view distance prediction between
//! Place entities.

pub mod autodiff;
pub mod kg;
pub mod ingest;
pub mod text;
pub mod subgraph;
pub mod models;
pub mod train;
pub mod synthetic;
