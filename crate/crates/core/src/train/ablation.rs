use serde::Serialize;

use super::{constant_mean_metrics, evaluate, split, train, Metrics, PairSample, TrainConfig, TrainError};
use crate::kg::GraphView;
use crate::models::{EmbeddingProvider, Variant};

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: String,
    pub metrics: Metrics,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub config: TrainConfig,
    pub split_ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub d_max_km: f64,
    pub constant_mean: Metrics,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub const TSV_HEADER: &'static str = "variant\tMAE_km\tRMSE_km";

    /// Header plus one row per variant.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(Self::TSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{}\t{:.6}\t{:.6}\n", r.label, r.metrics.mae_km, r.metrics.rmse_km));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }
}

/// Trains and scores every variant on one shared split. `cfg.variant` is
/// ignored; `cfg.seed` drives both the split and initialisation.
pub fn run_ablation_suite<G: GraphView + ?Sized>(
    g: &G,
    embeddings: &EmbeddingProvider,
    samples: &[PairSample],
    cfg: &TrainConfig,
    split_ratio: f64,
) -> Result<AblationReport, TrainError> {
    let (train_set, test_set) = split(samples, split_ratio, cfg.seed)?;
    let constant_mean = constant_mean_metrics(&train_set, &test_set)?;
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    let mut d_max_km = 0.0;
    for variant in Variant::ALL {
        let vcfg = TrainConfig { variant, ..cfg.clone() };
        let outcome = train(g, embeddings, &train_set, &vcfg)?;
        let ctx = outcome.trained.context(g, embeddings);
        let metrics = evaluate(&outcome.trained, g, &ctx, &test_set)?;
        log::info!("{variant}: MAE {:.3} km, RMSE {:.3} km", metrics.mae_km, metrics.rmse_km);
        d_max_km = outcome.trained.d_max;
        rows.push(AblationRow {
            variant,
            label: variant.label().to_string(),
            metrics,
            epochs_run: outcome.loss_trace.len(),
            stopped_early: outcome.stopped_early,
            loss_trace: outcome.loss_trace,
        });
    }
    Ok(AblationReport {
        config: cfg.clone(),
        split_ratio,
        n_train: train_set.len(),
        n_test: test_set.len(),
        d_max_km,
        constant_mean,
        rows,
    })
}
