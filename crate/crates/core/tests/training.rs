mod common;

use common::{id, GeoTracker};
use geokg::models::Variant;
use geokg::subgraph::SubgraphError;
use geokg::synthetic::{grid_city, place_id, GridCityConfig, SyntheticCity};
use geokg::train::*;

fn small_city(seed: u64) -> SyntheticCity {
    grid_city(&GridCityConfig { rows: 6, cols: 6, landmarks: 12, seed, ..Default::default() }).unwrap()
}

fn quick(variant: Variant, epochs: usize) -> TrainConfig {
    TrainConfig { variant, epochs, patience: 0, ..Default::default() }
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let city = small_city(1);
    let pairs = build_pairs(&city.graph);
    let cfg = TrainConfig { lr: 0.0, ..quick(Variant::Full, 5) };
    let out = train(&city.graph, &city.embeddings, &pairs, &cfg).unwrap();
    assert_eq!(out.loss_trace.len(), 5);
    assert!(out.loss_trace.iter().all(|l| *l == out.loss_trace[0]), "{:?}", out.loss_trace);
}

#[test]
fn single_sample_is_memorised() {
    let toy = toy_instance();
    let one = &toy.samples[..1];
    let cfg = TrainConfig { lr: 1e-3, embed_dim: 8, ..quick(Variant::Full, 600) };
    let out = train(&toy.graph, &toy.embeddings, one, &cfg).unwrap();
    let last = *out.loss_trace.last().unwrap();
    assert!(last <= 1e-4, "final normalised MSE {last}");
}

#[test]
fn smoothed_loss_decreases_over_first_fifty_epochs() {
    let city = grid_city(&GridCityConfig::default()).unwrap();
    let pairs = build_pairs(&city.graph);
    let (tr, _) = split(&pairs, 0.8, 0).unwrap();
    let out = train(&city.graph, &city.embeddings, &tr, &quick(Variant::Full, 50)).unwrap();
    assert!(out.loss_trace.iter().all(|l| l.is_finite()));
    for w in out.smoothed_trace.windows(2) {
        assert!(w[1] < w[0], "smoothed loss rose: {:?}", w);
    }
}

#[test]
fn km_metrics_are_normalised_metrics_times_scale() {
    let city = small_city(2);
    let pairs = build_pairs(&city.graph);
    let (tr, te) = split(&pairs, 0.8, 3).unwrap();
    let out = train(&city.graph, &city.embeddings, &tr, &quick(Variant::NoAttention, 3)).unwrap();
    let ctx = out.trained.context(&city.graph, &city.embeddings);
    let m = evaluate(&out.trained, &city.graph, &ctx, &te).unwrap();
    assert_eq!(m.mae_km, m.mae_norm * out.trained.d_max);
    assert_eq!(m.rmse_km, m.rmse_norm * out.trained.d_max);
    assert!(m.rmse_km >= m.mae_km);
    assert_eq!(m.n, te.len());
    assert_eq!(out.trained.d_max, tr.iter().map(|s| s.d_t_km).fold(0.0, f64::max));
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let city = small_city(4);
    let pairs = build_pairs(&city.graph);
    let cfg = TrainConfig { seed: 11, ..quick(Variant::Full, 4) };
    let a = train(&city.graph, &city.embeddings, &pairs, &cfg).unwrap();
    let b = train(&city.graph, &city.embeddings, &pairs, &cfg).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.trained.save(da.path()).unwrap();
    b.trained.save(db.path()).unwrap();
    for f in ["model.json", "params.txt", SCALE_FILE] {
        assert_eq!(std::fs::read(da.path().join(f)).unwrap(), std::fs::read(db.path().join(f)).unwrap(), "{f}");
    }

    let loaded = TrainedModel::load(da.path()).unwrap();
    let ctx = loaded.context(&city.graph, &city.embeddings);
    let (u, v) = (place_id(0, 0), place_id(1, 1));
    let p1 = predict_distance(&a.trained, &city.graph, &ctx, &u, &v).unwrap();
    let p2 = predict_distance(&loaded, &city.graph, &ctx, &u, &v).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn prediction_never_reads_coordinates() {
    let city = small_city(5);
    let pairs = build_pairs(&city.graph);
    let out = train(&city.graph, &city.embeddings, &pairs, &quick(Variant::Full, 2)).unwrap();

    let mut masked = city.graph.clone();
    let u = place_id(2, 2);
    let v = place_id(2, 3);
    masked.get_mut(&u).unwrap().geo = None;
    let tracker = GeoTracker::new(&masked);
    let ctx = out.trained.context(&tracker, &city.embeddings);
    let d = predict_distance(&out.trained, &tracker, &ctx, &u, &v).unwrap();
    assert!(d.is_finite() && (0.0..=out.trained.d_max).contains(&d));
    assert!(tracker.reads.borrow().is_empty(), "coordinates read: {:?}", tracker.reads.borrow());
}

#[test]
fn prediction_errors() {
    let city = small_city(6);
    let pairs = build_pairs(&city.graph);
    let out = train(&city.graph, &city.embeddings, &pairs, &quick(Variant::GeoOnly, 1)).unwrap();
    let ctx = out.trained.context(&city.graph, &city.embeddings);
    let g = &city.graph;
    let u = place_id(0, 0);
    let same = predict_distance(&out.trained, g, &ctx, &u, &u);
    assert!(matches!(same, Err(TrainError::Subgraph(SubgraphError::SameTarget(_)))));
    let unknown = predict_distance(&out.trained, g, &ctx, &u, &id("nowhere"));
    assert!(matches!(unknown, Err(TrainError::Subgraph(SubgraphError::UnknownEntity(ref x))) if x.as_str() == "nowhere"));
    let knowledge = predict_distance(&out.trained, g, &ctx, &u, &id("L000"));
    assert!(matches!(knowledge, Err(TrainError::Subgraph(SubgraphError::NotAPlace(_)))));
}

#[test]
fn geo_only_beats_constant_mean_when_structure_fixes_distance() {
    let cfg = GridCityConfig { rows: 10, cols: 10, jitter: 0.0, landmarks: 10, ..Default::default() };
    let city = grid_city(&cfg).unwrap();
    let pairs = build_pairs(&city.graph);
    let (tr, te) = split(&pairs, 0.8, 0).unwrap();
    let base = constant_mean_metrics(&tr, &te).unwrap();
    let out = train(&city.graph, &city.embeddings, &tr, &quick(Variant::GeoOnly, 60)).unwrap();
    let ctx = out.trained.context(&city.graph, &city.embeddings);
    let m = evaluate(&out.trained, &city.graph, &ctx, &te).unwrap();
    assert!(m.mae_km < base.mae_km, "GeoOnly {} vs constant {}", m.mae_km, base.mae_km);
}

#[test]
fn early_stopping_triggers_on_flat_loss() {
    let city = small_city(7);
    let pairs = build_pairs(&city.graph);
    let cfg = TrainConfig { lr: 0.0, patience: 5, ..quick(Variant::GeoOnly, 100) };
    let out = train(&city.graph, &city.embeddings, &pairs, &cfg).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.loss_trace.len(), 6);
}

#[test]
fn invalid_inputs_are_rejected() {
    let city = small_city(8);
    let err = train(&city.graph, &city.embeddings, &[], &quick(Variant::Full, 1));
    assert!(matches!(err, Err(TrainError::EmptyTrainSet)));
    let pairs = build_pairs(&city.graph);
    let bad = TrainConfig { k: 0, ..quick(Variant::Full, 1) };
    assert!(matches!(train(&city.graph, &city.embeddings, &pairs, &bad), Err(TrainError::InvalidConfig(_))));
}
