//! Supervision pairs, splitting, metrics, training and the ablation harness.

mod ablation;
mod gradcheck;
mod trainer;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{haversine_km, EntityId, GraphView, NodeKind};
use crate::models::ModelError;
use crate::subgraph::SubgraphError;

pub use ablation::{run_ablation_suite, AblationReport, AblationRow};
pub use gradcheck::{check_model_gradients, toy_instance, ToyInstance, TOY_WORD_DIM};
pub use trainer::{
    evaluate, predict_distance, predict_normalized, train, PreparedPairs, TrainConfig,
    TrainOutcome, TrainedModel, SCALE_FILE,
};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("training split is empty")]
    EmptyTrainSet,
    #[error("test split is empty")]
    EmptyTestSet,
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    #[error("all training distances are zero")]
    DegenerateScale,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Subgraph(#[from] SubgraphError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<crate::autodiff::AutodiffError> for TrainError {
    fn from(e: crate::autodiff::AutodiffError) -> Self {
        TrainError::Model(ModelError::Autodiff(e))
    }
}

/// One linked pair of located Places, `u < v` by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub u: EntityId,
    pub v: EntityId,
    pub d_t_km: f64,
}

impl PairSample {
    pub fn d_t_norm(&self, d_max: f64) -> f64 {
        self.d_t_km / d_max
    }
}

/// One sample per unordered pair of distinct Places joined by at least one
/// triple, when both carry coordinates. Sorted by `(u, v)`.
pub fn build_pairs<G: GraphView + ?Sized>(g: &G) -> Vec<PairSample> {
    let mut pairs: BTreeMap<(EntityId, EntityId), f64> = BTreeMap::new();
    for t in g.triples_indexed() {
        if t.head == t.tail
            || g.kind_at(t.head) != NodeKind::Place
            || g.kind_at(t.tail) != NodeKind::Place
        {
            continue;
        }
        let (Some(a), Some(b)) = (g.geo_at(t.head), g.geo_at(t.tail)) else { continue };
        let (x, y) = (g.id_at(t.head).clone(), g.id_at(t.tail).clone());
        let key = if x < y { (x, y) } else { (y, x) };
        pairs.entry(key).or_insert_with(|| haversine_km(a, b));
    }
    pairs
        .into_iter()
        .map(|((u, v), d_t_km)| PairSample { u, v, d_t_km })
        .collect()
}

/// Seeded shuffle, then the first `⌈ratio·n⌉` (at most `n−1`) samples train.
pub fn split(
    samples: &[PairSample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<PairSample>, Vec<PairSample>), TrainError> {
    let n = samples.len();
    if n < 2 {
        return Err(TrainError::TooFewSamples(n));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TrainError::InvalidConfig(format!("split ratio {ratio} not in (0, 1)")));
    }
    let n_train = ((ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Largest training distance; the normalisation scale.
pub fn d_max(train: &[PairSample]) -> Result<f64, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let m = train.iter().map(|s| s.d_t_km).fold(0.0, f64::max);
    if m > 0.0 && m.is_finite() {
        Ok(m)
    } else {
        Err(TrainError::DegenerateScale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae_km: f64,
    pub rmse_km: f64,
    pub mae_norm: f64,
    pub rmse_norm: f64,
    pub n: usize,
}

/// MAE and RMSE of normalised predictions, clamped to `[0, 1]` first, then
/// scaled to km by `d_max`.
pub fn score(pred_norm: &[f64], target_norm: &[f64], d_max: f64) -> Result<Metrics, TrainError> {
    if pred_norm.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    assert_eq!(pred_norm.len(), target_norm.len(), "prediction/target length");
    let n = pred_norm.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, t) in pred_norm.iter().zip(target_norm) {
        let e = p.clamp(0.0, 1.0) - t;
        abs += e.abs();
        sq += e * e;
    }
    let (mae_norm, rmse_norm) = (abs / n, (sq / n).sqrt());
    Ok(Metrics {
        mae_km: mae_norm * d_max,
        rmse_km: rmse_norm * d_max,
        mae_norm,
        rmse_norm,
        n: pred_norm.len(),
    })
}

/// Scores the predictor that always answers the mean training distance.
pub fn constant_mean_metrics(train: &[PairSample], test: &[PairSample]) -> Result<Metrics, TrainError> {
    let scale = d_max(train)?;
    let mean = train.iter().map(|s| s.d_t_km / scale).sum::<f64>() / train.len() as f64;
    let targets: Vec<f64> = test.iter().map(|s| s.d_t_km / scale).collect();
    score(&vec![mean; targets.len()], &targets, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Entity, GeoPoint, KnowledgeGraph, Triple};

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn samples(n: usize) -> Vec<PairSample> {
        (0..n)
            .map(|i| PairSample {
                u: id(&format!("a{i:02}")),
                v: id(&format!("b{i:02}")),
                d_t_km: i as f64 + 1.0,
            })
            .collect()
    }

    #[test]
    fn pairs_from_triangle_skip_unlocated() {
        let mut g = KnowledgeGraph::new();
        for (p, lon) in [("A", 0.0), ("B", 1.0), ("C", 2.0)] {
            g.add_entity(Entity::place(id(p), p, Some(GeoPoint::new(0.0, lon).unwrap()))).unwrap();
        }
        g.add_entity(Entity::place(id("D"), "D", None)).unwrap();
        g.add_entity(Entity::knowledge(id("K"), "K")).unwrap();
        for (h, t) in [("A", "B"), ("C", "B"), ("A", "C"), ("B", "A"), ("A", "D"), ("A", "K")] {
            g.add_triple(&Triple::new(&id(h), "r", &id(t))).unwrap();
        }
        let p = build_pairs(&g);
        let names: Vec<_> = p.iter().map(|s| (s.u.as_str(), s.v.as_str())).collect();
        assert_eq!(names, [("A", "B"), ("A", "C"), ("B", "C")]);
        let oracle = crate::kg::EARTH_RADIUS_KM * 2f64.to_radians();
        assert!((p[1].d_t_km - oracle).abs() < 1e-9);
        assert!(build_pairs(&KnowledgeGraph::new()).is_empty());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (tr, te) = split(&samples(10), 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr5, te5) = split(&samples(5), 0.8, 1).unwrap();
        assert_eq!((tr5.len(), te5.len()), (4, 1));
        let (tr2, te2) = split(&samples(2), 0.8, 1).unwrap();
        assert_eq!((tr2.len(), te2.len()), (1, 1));
        assert_eq!(split(&samples(10), 0.8, 1).unwrap().0, tr);
        assert_ne!(split(&samples(10), 0.8, 2).unwrap().0, tr);
        let mut all: Vec<_> = tr.iter().chain(&te).map(|s| s.u.clone()).collect();
        all.sort();
        assert_eq!(all, samples(10).into_iter().map(|s| s.u).collect::<Vec<_>>());
        assert!(matches!(split(&samples(1), 0.8, 1), Err(TrainError::TooFewSamples(1))));
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let t = [0.1, 0.5, 0.9];
        let m = score(&t, &t, 3.0).unwrap();
        assert_eq!((m.mae_km, m.rmse_km), (0.0, 0.0));
        assert!(matches!(score(&[], &[], 1.0), Err(TrainError::EmptyTestSet)));
    }

    #[test]
    fn constant_mean_by_hand() {
        // train 1, 2, 4 km → D_max 4, mean 7/12 normalised; test 1 and 3 km.
        let mk = |d: f64| PairSample { u: id("a"), v: id("b"), d_t_km: d };
        let train: Vec<_> = [1.0, 2.0, 4.0].into_iter().map(mk).collect();
        let test: Vec<_> = [1.0, 3.0].into_iter().map(mk).collect();
        let m = constant_mean_metrics(&train, &test).unwrap();
        // prediction 7/3 km; errors 4/3 and 2/3 km
        assert!((m.mae_km - 1.0).abs() < 1e-12);
        assert!((m.rmse_km - (10.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!(m.rmse_km >= m.mae_km);
    }

    #[test]
    fn predictions_are_clamped() {
        let m = score(&[-1.0, 2.0], &[0.0, 1.0], 5.0).unwrap();
        assert_eq!(m.mae_km, 0.0);
    }
}
