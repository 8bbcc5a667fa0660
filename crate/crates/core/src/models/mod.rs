//! The distance regressors.
//!
//! Two views feed the full model. The geographical view runs a relational
//! graph convolution over the labelled enclosing subgraph of the pair and
//! mean-pools the nodes. The knowledge view runs graph attention over the
//! whole graph starting from averaged title embeddings and combines the two
//! target rows with `W_s`. A single self-attention step mixes the two view
//! vectors before the output projection.
//!
//! [`Variant`] also covers the ablations and the whole-graph baselines. All
//! forwards take the [`ParamStore`] explicitly so gradient checks can perturb
//! it.

pub mod embedding;
pub mod fusion;
pub mod gat;
pub mod rgcn;

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, AutodiffError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::kg::GraphView;
use crate::subgraph::{EnclosingSubgraph, SubgraphError};

pub use embedding::EmbeddingProvider;
pub use fusion::{concat_linear, FusionHead};
pub use gat::{AttentionEdges, GatLayer};
pub use rgcn::{RelEdges, RgcnLayer};

pub const MODEL_META_FILE: &str = "model.json";
pub const MODEL_PARAMS_FILE: &str = "params.txt";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Subgraph(#[from] SubgraphError),
    #[error("{what}: expected dimension {expected}, got {got}")]
    FeatureDim {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("this variant needs an enclosing subgraph for every pair")]
    MissingSubgraph,
    #[error("graph states were not computed for this batch")]
    MissingStates,
    #[error("node index {0} is outside the graph")]
    NodeOutOfRange(usize),
    #[error("word vectors line {line}: {reason}")]
    Embedding { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model metadata: {0}")]
    Meta(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    GatBaseline,
    RgcnBaseline,
    GeoOnly,
    NoAttention,
    Full,
}

impl Variant {
    /// Report row order.
    pub const ALL: [Variant; 5] = [
        Variant::GatBaseline,
        Variant::RgcnBaseline,
        Variant::GeoOnly,
        Variant::NoAttention,
        Variant::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::GatBaseline => "GAT",
            Variant::RgcnBaseline => "R-GCN",
            Variant::GeoOnly => "GeoOnly",
            Variant::NoAttention => "NoAttention",
            Variant::Full => "Full",
        }
    }

    /// Accepts the report label or the snake-case name, case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|v| {
            let snake = serde_json::to_value(v)
                .ok()
                .and_then(|j| j.as_str().map(str::to_string))
                .unwrap_or_default();
            s == snake || s == v.label().to_ascii_lowercase().replace('-', "_")
        })
    }

    pub fn uses_subgraph(self) -> bool {
        matches!(self, Variant::Full | Variant::NoAttention | Variant::GeoOnly)
    }

    pub fn uses_graph_states(self) -> bool {
        !matches!(self, Variant::GeoOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub layers: usize,
    /// Subgraph radius; the geographical input width is `2(k+1)`.
    pub k: usize,
    /// Word-vector dimension `p`.
    pub word_dim: usize,
    /// Most frequent relation labels kept before the rest share one slot.
    pub relation_cap: usize,
}

impl ModelConfig {
    pub fn new(variant: Variant, word_dim: usize) -> Self {
        Self {
            variant,
            hidden: 32,
            layers: 3,
            k: crate::subgraph::DEFAULT_RADIUS,
            word_dim,
            relation_cap: 64,
        }
    }
}

/// Relation labels known to a model. Index `labels.len()` is the shared
/// slot for labels beyond the cap or unseen at training time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationVocab {
    labels: Vec<String>,
}

impl RelationVocab {
    /// Keeps the `cap` most frequent labels (ties by label).
    pub fn build<G: GraphView + ?Sized>(g: &G, cap: usize) -> Self {
        let mut counts = vec![0usize; g.relation_count()];
        for t in g.triples_indexed() {
            counts[t.relation.index()] += 1;
        }
        let mut ranked: Vec<(usize, String)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(r, &c)| (c, g.relation_label(crate::kg::RelationId(r)).to_string()))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut labels: Vec<String> = ranked.into_iter().take(cap).map(|(_, l)| l).collect();
        labels.sort();
        Self { labels }
    }

    pub fn from_labels(mut labels: Vec<String>) -> Self {
        labels.sort();
        labels.dedup();
        Self { labels }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of relation slots including the shared one.
    pub fn len(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn other(&self) -> usize {
        self.labels.len()
    }

    /// Model slot of every graph relation id.
    pub fn map_graph<G: GraphView + ?Sized>(&self, g: &G) -> Vec<usize> {
        let pos: HashMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        (0..g.relation_count())
            .map(|r| {
                let label = g.relation_label(crate::kg::RelationId(r));
                pos.get(label).copied().unwrap_or(self.other())
            })
            .collect()
    }
}

/// Everything a forward pass needs from the full graph; built once per graph.
/// Construction reads structure and titles only.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub node_count: usize,
    pub titles: Tensor,
    pub attention: AttentionEdges,
    pub relational: RelEdges,
    pub rel_map: Vec<usize>,
    other: usize,
}

impl GraphContext {
    pub fn new<G: GraphView + ?Sized>(
        g: &G,
        embeddings: &EmbeddingProvider,
        vocab: &RelationVocab,
    ) -> Self {
        let rel_map = vocab.map_graph(g);
        let relational = RelEdges::new(
            g.node_count(),
            g.triples_indexed()
                .iter()
                .map(|t| (t.head, rel_map[t.relation.index()], t.tail)),
        );
        Self {
            node_count: g.node_count(),
            titles: embeddings.title_matrix(g),
            attention: AttentionEdges::from_graph(g),
            relational,
            rel_map,
            other: vocab.other(),
        }
    }

    fn slot(&self, r: crate::kg::RelationId) -> usize {
        self.rel_map.get(r.index()).copied().unwrap_or(self.other)
    }
}

#[derive(Debug, Clone)]
pub struct GeoViewEncoder {
    pub layers: Vec<RgcnLayer>,
    pub input_dim: usize,
}

impl GeoViewEncoder {
    /// Stacked relational convolutions on the one-hot labels, mean-pooled.
    /// Returns a `1×hidden` row. The subgraph is brought into canonical order
    /// first, so any local relabelling gives bit-identical output.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &GraphContext,
        sg: &EnclosingSubgraph,
    ) -> Result<Var, ModelError> {
        if sg.feature_dim() != self.input_dim {
            return Err(ModelError::FeatureDim {
                what: "subgraph features",
                expected: self.input_dim,
                got: sg.feature_dim(),
            });
        }
        let sg = if sg.is_canonical() { Cow::Borrowed(sg) } else { Cow::Owned(sg.canonical()) };
        let edges = RelEdges::new(
            sg.len(),
            sg.edges().iter().map(|&(s, r, d)| (s, ctx.slot(r), d)),
        );
        let mut h = tape.constant(sg.features().clone());
        for layer in &self.layers {
            h = layer.forward(tape, store, h, &edges)?;
        }
        Ok(tape.mean_rows(h)?)
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeViewEncoder {
    pub layers: Vec<GatLayer>,
    pub w_s: ParamId,
}

fn check_node(ctx: &GraphContext, ix: usize) -> Result<usize, ModelError> {
    if ix < ctx.node_count {
        Ok(ix)
    } else {
        Err(ModelError::NodeOutOfRange(ix))
    }
}

fn gat_stack(
    layers: &[GatLayer],
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &GraphContext,
) -> Result<Var, ModelError> {
    let mut h = tape.constant(ctx.titles.clone());
    for layer in layers {
        h = layer.forward(tape, store, h, &ctx.attention)?;
    }
    Ok(h)
}

fn target_concat(tape: &mut Tape, states: Var, u: usize, v: usize) -> Result<Var, ModelError> {
    let hu = tape.gather_rows(states, &[u])?;
    let hv = tape.gather_rows(states, &[v])?;
    Ok(tape.concat_cols(hu, hv)?)
}

impl KnowledgeViewEncoder {
    /// Attention states of every graph node, `n×hidden`.
    pub fn node_states(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &GraphContext,
    ) -> Result<Var, ModelError> {
        gat_stack(&self.layers, tape, store, ctx)
    }

    /// `[h_u ⊕ h_v] W_s`.
    pub fn pair(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        states: Var,
        u: usize,
        v: usize,
    ) -> Result<Var, ModelError> {
        let cat = target_concat(tape, states, u, v)?;
        let ws = tape.param(store, self.w_s);
        Ok(tape.matmul(cat, ws)?)
    }
}

#[derive(Debug, Clone)]
enum Architecture {
    Full {
        geo: GeoViewEncoder,
        knowledge: KnowledgeViewEncoder,
        fusion: FusionHead,
    },
    NoAttention {
        geo: GeoViewEncoder,
        knowledge: KnowledgeViewEncoder,
        w_m: ParamId,
    },
    GeoOnly {
        geo: GeoViewEncoder,
        w: ParamId,
    },
    GatBaseline {
        layers: Vec<GatLayer>,
        w: ParamId,
    },
    RgcnBaseline {
        layers: Vec<RgcnLayer>,
        w: ParamId,
    },
}

/// One training pair in graph node indices.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub u: usize,
    pub v: usize,
    pub subgraph: Option<&'a EnclosingSubgraph>,
}

/// Model structure: configuration, relation slots and parameter handles.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub vocab: RelationVocab,
    arch: Architecture,
}

impl Network {
    /// Whole-graph node states shared by every pair of a batch; `None` for
    /// variants that only look at subgraphs.
    pub fn graph_states(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &GraphContext,
    ) -> Result<Option<Var>, ModelError> {
        if ctx.titles.cols() != self.config.word_dim {
            return Err(ModelError::FeatureDim {
                what: "title embeddings",
                expected: self.config.word_dim,
                got: ctx.titles.cols(),
            });
        }
        Ok(match &self.arch {
            Architecture::Full { knowledge, .. } | Architecture::NoAttention { knowledge, .. } => {
                Some(knowledge.node_states(tape, store, ctx)?)
            }
            Architecture::GatBaseline { layers, .. } => Some(gat_stack(layers, tape, store, ctx)?),
            Architecture::RgcnBaseline { layers, .. } => {
                let mut h = tape.constant(ctx.titles.clone());
                for layer in layers {
                    h = layer.forward(tape, store, h, &ctx.relational)?;
                }
                Some(h)
            }
            Architecture::GeoOnly { .. } => None,
        })
    }

    /// Normalised distance prediction for one pair, a 1×1 value.
    pub fn predict(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &GraphContext,
        states: Option<Var>,
        pair: &PairInput<'_>,
    ) -> Result<Var, ModelError> {
        let (u, v) = (check_node(ctx, pair.u)?, check_node(ctx, pair.v)?);
        let sg = || pair.subgraph.ok_or(ModelError::MissingSubgraph);
        let states = || states.ok_or(ModelError::MissingStates);
        match &self.arch {
            Architecture::Full { geo, knowledge, fusion } => {
                let e1 = geo.forward(tape, store, ctx, sg()?)?;
                let e2 = knowledge.pair(tape, store, states()?, u, v)?;
                Ok(fusion.forward(tape, store, e1, e2)?)
            }
            Architecture::NoAttention { geo, knowledge, w_m } => {
                let e1 = geo.forward(tape, store, ctx, sg()?)?;
                let e2 = knowledge.pair(tape, store, states()?, u, v)?;
                Ok(concat_linear(tape, store, e1, e2, *w_m)?)
            }
            Architecture::GeoOnly { geo, w } => {
                let e1 = geo.forward(tape, store, ctx, sg()?)?;
                let w = tape.param(store, *w);
                Ok(tape.matmul(e1, w)?)
            }
            Architecture::GatBaseline { w, .. } | Architecture::RgcnBaseline { w, .. } => {
                let cat = target_concat(tape, states()?, u, v)?;
                let w = tape.param(store, *w);
                Ok(tape.matmul(cat, w)?)
            }
        }
    }

    pub fn geo_encoder(&self) -> Option<&GeoViewEncoder> {
        match &self.arch {
            Architecture::Full { geo, .. }
            | Architecture::NoAttention { geo, .. }
            | Architecture::GeoOnly { geo, .. } => Some(geo),
            _ => None,
        }
    }

    pub fn knowledge_encoder(&self) -> Option<&KnowledgeViewEncoder> {
        match &self.arch {
            Architecture::Full { knowledge, .. } | Architecture::NoAttention { knowledge, .. } => {
                Some(knowledge)
            }
            _ => None,
        }
    }

    pub fn fusion_head(&self) -> Option<&FusionHead> {
        match &self.arch {
            Architecture::Full { fusion, .. } => Some(fusion),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    format: String,
    config: ModelConfig,
    relations: Vec<String>,
}

const META_FORMAT: &str = "geokg-model v1";

/// A network with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub net: Network,
    pub store: ParamStore,
}

impl Model {
    /// Fresh Xavier-initialised model; all randomness comes from `seed`.
    pub fn new(config: ModelConfig, vocab: RelationVocab, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, r, layers) = (config.hidden, vocab.len(), config.layers.max(1));
        let geo_in = 2 * (config.k + 1);

        let rgcn = |store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d_in: usize| {
            (0..layers)
                .map(|l| {
                    let din = if l == 0 { d_in } else { h };
                    RgcnLayer::new(store, rng, &format!("{prefix}.l{l}"), r, din, h)
                })
                .collect::<Vec<_>>()
        };
        let gat = |store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str| {
            (0..layers)
                .map(|l| {
                    let din = if l == 0 { config.word_dim } else { h };
                    GatLayer::new(store, rng, &format!("{prefix}.l{l}"), din, h)
                })
                .collect::<Vec<_>>()
        };

        let arch = match config.variant {
            Variant::Full | Variant::NoAttention | Variant::GeoOnly => {
                let geo = GeoViewEncoder {
                    layers: rgcn(&mut store, &mut rng, "geo", geo_in),
                    input_dim: geo_in,
                };
                if config.variant == Variant::GeoOnly {
                    let w = store.add_xavier("head.w", h, 1, &mut rng);
                    Architecture::GeoOnly { geo, w }
                } else {
                    let layers = gat(&mut store, &mut rng, "kn");
                    let w_s = store.add_xavier("kn.w_s", 2 * h, h, &mut rng);
                    let knowledge = KnowledgeViewEncoder { layers, w_s };
                    if config.variant == Variant::Full {
                        let fusion = FusionHead::new(&mut store, &mut rng, "fuse", h);
                        Architecture::Full { geo, knowledge, fusion }
                    } else {
                        let w_m = store.add_xavier("head.w_m", 2 * h, 1, &mut rng);
                        Architecture::NoAttention { geo, knowledge, w_m }
                    }
                }
            }
            Variant::GatBaseline => {
                let layers = gat(&mut store, &mut rng, "gat");
                let w = store.add_xavier("head.w", 2 * h, 1, &mut rng);
                Architecture::GatBaseline { layers, w }
            }
            Variant::RgcnBaseline => {
                let layers = rgcn(&mut store, &mut rng, "rgcn", config.word_dim);
                let w = store.add_xavier("head.w", 2 * h, 1, &mut rng);
                Architecture::RgcnBaseline { layers, w }
            }
        };
        Self {
            net: Network { config, vocab, arch },
            store,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    /// `name → shape` of every parameter.
    pub fn shapes(&self) -> BTreeMap<String, (usize, usize)> {
        self.store
            .iter()
            .map(|p| (p.name.clone(), p.value.shape()))
            .collect()
    }

    /// Writes `model.json` and `params.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir).map_err(|source| ModelError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let meta = ModelMeta {
            format: META_FORMAT.into(),
            config: self.net.config.clone(),
            relations: self.net.vocab.labels.clone(),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| ModelError::Meta(e.to_string()))?;
        let path = dir.join(MODEL_META_FILE);
        std::fs::write(&path, json + "\n").map_err(|source| ModelError::Io { path, source })?;
        checkpoint::save(&self.store, &dir.join(MODEL_PARAMS_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let path = dir.join(MODEL_META_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| ModelError::Io { path, source })?;
        let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| ModelError::Meta(e.to_string()))?;
        if meta.format != META_FORMAT {
            return Err(ModelError::Meta(format!("unsupported format {:?}", meta.format)));
        }
        let mut model = Self::new(meta.config, RelationVocab { labels: meta.relations }, 0);
        let saved = checkpoint::load(&dir.join(MODEL_PARAMS_FILE))?;
        checkpoint::restore_into(&mut model.store, &saved)?;
        Ok(model)
    }
}
