use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{d_max, score, Metrics, PairSample, TrainError};
use crate::autodiff::{Adam, Tape, Tensor};
use crate::kg::{EntityId, GraphView};
use crate::models::{
    EmbeddingProvider, GraphContext, Model, ModelConfig, ModelError, PairInput, RelationVocab,
    Variant,
};
use crate::subgraph::{extract, EnclosingSubgraph, SubgraphError};

pub const SCALE_FILE: &str = "scale.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub embed_dim: usize,
    pub layers: usize,
    /// Enclosing-subgraph radius.
    pub k: usize,
    pub relation_cap: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Pairs per optimiser step; 0 means the whole training split.
    pub batch_size: usize,
    /// Epochs without smoothed-loss improvement before stopping; 0 disables.
    pub patience: usize,
    pub min_improvement: f64,
    /// Weight of the previous value in the exponentially smoothed loss.
    pub smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            embed_dim: 32,
            layers: 3,
            k: crate::subgraph::DEFAULT_RADIUS,
            relation_cap: 64,
            lr: 1e-4,
            epochs: 300,
            seed: 0,
            batch_size: 16,
            patience: 20,
            min_improvement: 1e-7,
            smoothing: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, word_dim: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            hidden: self.embed_dim,
            layers: self.layers,
            k: self.k,
            word_dim,
            relation_cap: self.relation_cap,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.embed_dim == 0 || self.layers == 0 {
            return bad("embed_dim and layers must be positive");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad("smoothing must lie in [0, 1)");
        }
        Ok(())
    }
}

/// A model together with its distance scale.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub d_max: f64,
}

#[derive(Serialize, Deserialize)]
struct Scale {
    d_max: f64,
}

impl TrainedModel {
    /// Graph context built with this model's relation slots.
    pub fn context<G: GraphView + ?Sized>(&self, g: &G, embeddings: &EmbeddingProvider) -> GraphContext {
        GraphContext::new(g, embeddings, &self.model.net.vocab)
    }

    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        self.model.save(dir)?;
        let path = dir.join(SCALE_FILE);
        let json = serde_json::to_string(&Scale { d_max: self.d_max }).expect("plain struct");
        std::fs::write(&path, json + "\n").map_err(|source| TrainError::Io { path, source })
    }

    pub fn load(dir: &Path) -> Result<Self, TrainError> {
        let model = Model::load(dir)?;
        let path = dir.join(SCALE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| TrainError::Io { path, source })?;
        let scale: Scale =
            serde_json::from_str(&text).map_err(|e| ModelError::Meta(format!("{SCALE_FILE}: {e}")))?;
        if !(scale.d_max > 0.0 && scale.d_max.is_finite()) {
            return Err(TrainError::DegenerateScale);
        }
        Ok(Self { model, d_max: scale.d_max })
    }
}

/// Samples resolved to node indices, with their subgraphs when the variant
/// needs them. Each subgraph is extracted once.
#[derive(Debug, Clone)]
pub struct PreparedPairs {
    pub samples: Vec<PairSample>,
    nodes: Vec<(usize, usize)>,
    subgraphs: Vec<Option<EnclosingSubgraph>>,
}

impl PreparedPairs {
    pub fn new<G: GraphView + ?Sized>(
        g: &G,
        samples: &[PairSample],
        k: usize,
        with_subgraphs: bool,
    ) -> Result<Self, TrainError> {
        let resolve = |id: &EntityId| {
            g.index_of(id)
                .ok_or_else(|| TrainError::Subgraph(SubgraphError::UnknownEntity(id.clone())))
        };
        let mut nodes = Vec::with_capacity(samples.len());
        let mut subgraphs = Vec::with_capacity(samples.len());
        for s in samples {
            nodes.push((resolve(&s.u)?, resolve(&s.v)?));
            subgraphs.push(if with_subgraphs { Some(extract(g, &s.u, &s.v, k)?) } else { None });
        }
        Ok(Self {
            samples: samples.to_vec(),
            nodes,
            subgraphs,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input(&self, i: usize) -> PairInput<'_> {
        PairInput {
            u: self.nodes[i].0,
            v: self.nodes[i].1,
            subgraph: self.subgraphs[i].as_ref(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trained: TrainedModel,
    /// Mean normalised squared error per epoch.
    pub loss_trace: Vec<f64>,
    pub smoothed_trace: Vec<f64>,
    pub stopped_early: bool,
}

/// Trains `cfg.variant` on `train_samples`. MSE is taken on distances divided
/// by the training maximum. Pairs are visited in one seeded order that is
/// reused every epoch.
pub fn train<G: GraphView + ?Sized>(
    g: &G,
    embeddings: &EmbeddingProvider,
    train_samples: &[PairSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let scale = d_max(train_samples)?;
    let vocab = RelationVocab::build(g, cfg.relation_cap);
    let mut model = Model::new(cfg.model_config(embeddings.dim()), vocab, cfg.seed);
    let ctx = GraphContext::new(g, embeddings, &model.net.vocab);
    let data = PreparedPairs::new(g, train_samples, cfg.k, cfg.variant.uses_subgraph())?;
    let targets: Vec<f64> = train_samples.iter().map(|s| s.d_t_km / scale).collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    order.shuffle(&mut rng);
    let batch = if cfg.batch_size == 0 { order.len() } else { cfg.batch_size };

    let mut adam = Adam::new(cfg.lr);
    let mut loss_trace = Vec::new();
    let mut smoothed_trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            model.store.zero_grad();
            let mut tape = Tape::new();
            let states = model.net.graph_states(&mut tape, &model.store, &ctx)?;
            let mut sum = None;
            for &i in chunk {
                let pred = model.net.predict(&mut tape, &model.store, &ctx, states, &data.input(i))?;
                let target = tape.constant(Tensor::scalar(targets[i]));
                let diff = tape.sub(pred, target)?;
                let sq = tape.elementwise_mul(diff, diff)?;
                total += tape.value(sq).item();
                sum = Some(match sum {
                    None => sq,
                    Some(acc) => tape.add(acc, sq)?,
                });
            }
            let sum = sum.expect("chunks are non-empty");
            let loss = tape.scale(sum, 1.0 / chunk.len() as f64);
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b, value });
            }
            tape.backward(loss, &mut model.store)?;
            adam.step(&mut model.store);
        }
        let epoch_loss = total / order.len() as f64;
        let smoothed = match smoothed_trace.last() {
            None => epoch_loss,
            Some(prev) => cfg.smoothing * prev + (1.0 - cfg.smoothing) * epoch_loss,
        };
        loss_trace.push(epoch_loss);
        smoothed_trace.push(smoothed);
        log::debug!("{} epoch {epoch}: loss {epoch_loss:.6e} smoothed {smoothed:.6e}", cfg.variant);

        if smoothed < best - cfg.min_improvement {
            best = smoothed;
            stale = 0;
        } else {
            stale += 1;
        }
        if cfg.patience > 0 && stale >= cfg.patience {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        trained: TrainedModel { model, d_max: scale },
        loss_trace,
        smoothed_trace,
        stopped_early,
    })
}

/// Raw normalised predictions (not clamped), one per prepared pair.
pub fn predict_normalized(
    trained: &TrainedModel,
    ctx: &GraphContext,
    data: &PreparedPairs,
) -> Result<Vec<f64>, TrainError> {
    let net = &trained.model.net;
    let store = &trained.model.store;
    let mut tape = Tape::new();
    let states = net.graph_states(&mut tape, store, ctx)?;
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let p = net.predict(&mut tape, store, ctx, states, &data.input(i))?;
        out.push(tape.value(p).item());
    }
    Ok(out)
}

/// MAE/RMSE on `test`, scored in normalised space and reported in km.
pub fn evaluate<G: GraphView + ?Sized>(
    trained: &TrainedModel,
    g: &G,
    ctx: &GraphContext,
    test: &[PairSample],
) -> Result<Metrics, TrainError> {
    if test.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let cfg = trained.model.config();
    let data = PreparedPairs::new(g, test, cfg.k, cfg.variant.uses_subgraph())?;
    let preds = predict_normalized(trained, ctx, &data)?;
    let targets: Vec<f64> = test.iter().map(|s| s.d_t_km / trained.d_max).collect();
    score(&preds, &targets, trained.d_max)
}

/// Predicted distance in km between two Places, clamped to `[0, D_max]`.
/// Only graph structure and titles are read; coordinates are never touched.
pub fn predict_distance<G: GraphView + ?Sized>(
    trained: &TrainedModel,
    g: &G,
    ctx: &GraphContext,
    u: &EntityId,
    v: &EntityId,
) -> Result<f64, TrainError> {
    let cfg = trained.model.config();
    let sg = extract(g, u, v, cfg.k)?;
    let resolve = |id: &EntityId| {
        g.index_of(id)
            .ok_or_else(|| TrainError::Subgraph(SubgraphError::UnknownEntity(id.clone())))
    };
    let pair = PairInput {
        u: resolve(u)?,
        v: resolve(v)?,
        subgraph: Some(&sg),
    };
    let net = &trained.model.net;
    let mut tape = Tape::new();
    let states = net.graph_states(&mut tape, &trained.model.store, ctx)?;
    let p = net.predict(&mut tape, &trained.model.store, ctx, states, &pair)?;
    let value = tape.value(p).item();
    if !value.is_finite() {
        return Err(TrainError::NonFiniteLoss { epoch: 0, batch: 0, value });
    }
    Ok(value.clamp(0.0, 1.0) * trained.d_max)
}
