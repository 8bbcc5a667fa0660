use super::{PreparedPairs, PairSample, TrainError};
use crate::autodiff::{grad_check, GradCheckReport, Tape, Tensor};
use crate::kg::{Entity, EntityId, GeoPoint, KnowledgeGraph, Triple};
use crate::models::{EmbeddingProvider, GraphContext, Model, ModelConfig, RelationVocab, Variant};

/// Eight nodes, six of them Places. The enclosing subgraph of `(A, B)`
/// with `k = 2` has the five nodes A, B, C, D, E.
pub struct ToyInstance {
    pub graph: KnowledgeGraph,
    pub embeddings: EmbeddingProvider,
    pub samples: Vec<PairSample>,
}

pub const TOY_WORD_DIM: usize = 4;

pub fn toy_instance() -> ToyInstance {
    let id = |s: &str| EntityId::new(s).expect("non-empty");
    let mut g = KnowledgeGraph::new();
    let places = [
        ("A", "alpha square", 0.00, 0.00),
        ("B", "beta gate", 0.00, 0.01),
        ("C", "gamma street", 0.005, 0.005),
        ("D", "delta park", -0.005, 0.006),
        ("E", "epsilon tower", -0.008, 0.002),
        ("F", "zeta pier", -0.012, 0.0),
    ];
    for (i, t, lat, lon) in places {
        let geo = GeoPoint::new(lat, lon).expect("valid literal");
        g.add_entity(Entity::place(id(i), t, Some(geo))).expect("fresh id");
    }
    g.add_entity(Entity::knowledge(id("K1"), "alpha museum")).expect("fresh id");
    g.add_entity(Entity::knowledge(id("K2"), "gate festival")).expect("fresh id");
    let edges = [
        ("A", "next_to", "B"),
        ("A", "near", "C"),
        ("C", "next_to", "B"),
        ("A", "near", "D"),
        ("D", "near", "B"),
        ("A", "near", "E"),
        ("E", "next_to", "D"),
        ("F", "near", "E"),
        ("K1", "about", "A"),
        ("K1", "about", "F"),
        ("K2", "about", "B"),
        ("K2", "about", "K1"),
    ];
    for (h, r, t) in edges {
        g.add_triple(&Triple::new(&id(h), r, &id(t))).expect("known ids");
    }

    let mut emb = EmbeddingProvider::new(TOY_WORD_DIM);
    let words = [
        ("alpha", [0.3, -0.2, 0.5, 0.1]),
        ("beta", [-0.4, 0.2, 0.1, 0.6]),
        ("gamma", [0.2, 0.7, -0.3, 0.0]),
        ("delta", [-0.1, -0.5, 0.4, 0.3]),
        ("epsilon", [0.6, 0.1, 0.2, -0.4]),
        ("zeta", [0.0, 0.3, -0.6, 0.2]),
        ("square", [0.1, 0.1, 0.1, 0.1]),
        ("gate", [0.5, -0.3, 0.0, 0.2]),
        ("museum", [-0.2, 0.4, 0.3, -0.1]),
        ("festival", [0.3, 0.3, -0.2, 0.5]),
    ];
    for (w, v) in words {
        emb.insert(w, v.to_vec()).expect("fixed dimension");
    }
    let samples = [("A", "B", 0.3), ("A", "D", 0.6), ("C", "B", 0.45)]
        .into_iter()
        .map(|(u, v, d)| PairSample { u: id(u), v: id(v), d_t_km: d })
        .collect();
    ToyInstance {
        graph: g,
        embeddings: emb,
        samples,
    }
}

/// Finite-difference check of a freshly initialised model on the toy
/// instance, with the summed squared error as loss.
pub fn check_model_gradients(
    variant: Variant,
    hidden: usize,
    seed: u64,
    h: f64,
    max_entries: usize,
) -> Result<GradCheckReport, TrainError> {
    let toy = toy_instance();
    let cfg = ModelConfig {
        hidden,
        ..ModelConfig::new(variant, TOY_WORD_DIM)
    };
    let vocab = RelationVocab::build(&toy.graph, cfg.relation_cap);
    let mut model = Model::new(cfg, vocab, seed);
    let ctx = GraphContext::new(&toy.graph, &toy.embeddings, &model.net.vocab);
    let data = PreparedPairs::new(&toy.graph, &toy.samples, model.config().k, variant.uses_subgraph())?;
    let net = &model.net;
    grad_check(&mut model.store, h, max_entries, |tape: &mut Tape, store| {
        let states = net.graph_states(tape, store, &ctx)?;
        let mut total = None;
        for i in 0..data.len() {
            let p = net.predict(tape, store, &ctx, states, &data.input(i))?;
            let t = tape.constant(Tensor::scalar(data.samples[i].d_t_km));
            let d = tape.sub(p, t)?;
            let sq = tape.elementwise_mul(d, d)?;
            total = Some(match total {
                None => sq,
                Some(acc) => tape.add(acc, sq)?,
            });
        }
        Ok::<_, TrainError>(total.expect("toy instance has samples"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgraph::extract;

    #[test]
    fn toy_subgraph_has_five_nodes() {
        let toy = toy_instance();
        assert_eq!(toy.graph.entities().len(), 8);
        let a = EntityId::new("A").unwrap();
        let b = EntityId::new("B").unwrap();
        let sg = extract(&toy.graph, &a, &b, 2).unwrap();
        let ids: Vec<_> = sg.nodes().iter().map(|n| n.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C", "D", "E"]);
    }

    #[test]
    fn every_variant_passes() {
        for v in Variant::ALL {
            let r = check_model_gradients(v, 6, 3, 1e-5, 12).unwrap();
            assert!(r.max_rel_error <= 1e-4, "{v}: {:?}", r.per_param);
            assert!(r.max_abs_grad > 0.0);
        }
    }
}
