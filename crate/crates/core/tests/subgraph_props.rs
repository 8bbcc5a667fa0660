mod common;

use common::{brute_force_nodes, random_graph};
use geokg::kg::{GraphView, NodeKind};
use geokg::subgraph::extract;
use proptest::prelude::*;

fn places(g: &geokg::kg::KnowledgeGraph) -> Vec<usize> {
    (0..g.node_count()).filter(|&i| g.kind_at(i) == NodeKind::Place).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_path_enumeration(seed in any::<u64>(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>(), k in 1usize..=3) {
        let g = random_graph(seed);
        let ps = places(&g);
        let (ui, vi) = (ps[a.index(ps.len())], ps[b.index(ps.len())]);
        prop_assume!(ui != vi);
        let (u, v) = (g.id_at(ui).clone(), g.id_at(vi).clone());
        let sg = extract(&g, &u, &v, k).unwrap();
        let got: std::collections::BTreeSet<_> = sg.nodes().iter().cloned().collect();
        prop_assert_eq!(got, brute_force_nodes(&g, &u, &v, k));
    }

    #[test]
    fn structure_invariants(seed in any::<u64>(), k in 1usize..=3) {
        let g = random_graph(seed);
        let ps = places(&g);
        let (u, v) = (g.id_at(ps[0]).clone(), g.id_at(ps[1]).clone());
        let sg = extract(&g, &u, &v, k).unwrap();
        prop_assert_eq!(sg.u(), &u);
        prop_assert_eq!(sg.v(), &v);
        prop_assert!(sg.is_canonical());
        prop_assert_eq!(sg.labels()[0], (0, 1));
        prop_assert_eq!(sg.labels()[1], (1, 0));
        for &(du, dv) in sg.labels() {
            prop_assert!(du <= k && dv <= k);
        }
        let f = sg.features();
        prop_assert_eq!(f.shape(), (sg.len(), 2 * (k + 1)));
        for r in 0..f.rows() {
            prop_assert_eq!(f.row(r).iter().sum::<f64>(), 2.0);
        }
        for &(h, _, t) in sg.edges() {
            prop_assert!(h < sg.len() && t < sg.len());
        }
        for id in sg.nodes() {
            prop_assert_eq!(g.kind_at(g.index_of(id).unwrap()), NodeKind::Place);
        }
        let sw = extract(&g, &v, &u, k).unwrap();
        let a: std::collections::BTreeSet<_> = sg.nodes().iter().collect();
        let b: std::collections::BTreeSet<_> = sw.nodes().iter().collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn canonical_undoes_any_permutation(seed in any::<u64>(), shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let g = random_graph(seed);
        let ps = places(&g);
        let sg = extract(&g, g.id_at(ps[0]), g.id_at(ps[1]), 2).unwrap();
        let mut perm: Vec<usize> = (0..sg.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        let p = sg.permuted(&perm).unwrap();
        prop_assert_eq!(p.canonical_form(), sg.canonical_form());
        prop_assert_eq!(p.canonical(), sg.clone());
    }
}
