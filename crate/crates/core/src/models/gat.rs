//! Graph attention with the double-exponential score.
//!
//! For centre `i` and neighbour `j ∈ N_i ∪ {i}`:
//! `e_ij = exp(ReLU(a · [W h_i ⊕ W h_j]))`, `α_ij = softmax_j(e_ij)` and
//! `h_i' = ReLU(Σ_j α_ij W h_j)`. Neighbourhoods are undirected.

use std::collections::BTreeSet;

use rand::Rng;

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Var};
use crate::kg::GraphView;

/// Attention pairs `(dst = centre, src = neighbour)`, sorted by `(dst, src)`,
/// with one self pair per node.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionEdges {
    n: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
}

impl AttentionEdges {
    /// Builds undirected neighbourhoods plus self-loops from undirected
    /// `(a, b)` pairs over `n` nodes.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut nb: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for (a, b) in pairs {
            nb[a].insert(b);
            nb[b].insert(a);
        }
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for (i, set) in nb.iter().enumerate() {
            for &j in set {
                dst.push(i);
                src.push(j);
            }
        }
        Self { n, src, dst }
    }

    pub fn from_graph<G: GraphView + ?Sized>(g: &G) -> Self {
        Self::from_pairs(
            g.node_count(),
            g.triples_indexed().iter().map(|t| (t.head, t.tail)),
        )
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// `(centre, neighbour)` of every attention pair, in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.dst.iter().copied().zip(self.src.iter().copied())
    }
}

#[derive(Debug, Clone)]
pub struct GatLayer {
    pub w: ParamId,
    pub a: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl GatLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        let w = store.add_xavier(format!("{prefix}.w"), d_in, d_out, rng);
        let a = store.add_xavier(format!("{prefix}.a"), 2 * d_out, 1, rng);
        Self { w, a, d_in, d_out }
    }

    /// Returns `(Z, α)` where `Z = H W` and `α` is the column of attention
    /// weights aligned with [`AttentionEdges::pairs`].
    pub fn attention(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        edges: &AttentionEdges,
    ) -> Result<(Var, Var), AutodiffError> {
        if tape.value(h).rows() != edges.n {
            return Err(AutodiffError::ShapeMismatch {
                op: "gat_layer",
                left: tape.value(h).shape(),
                right: (edges.n, self.d_in),
            });
        }
        let w = tape.param(store, self.w);
        let a = tape.param(store, self.a);
        let z = tape.matmul(h, w)?;
        let first: Vec<usize> = (0..self.d_out).collect();
        let second: Vec<usize> = (self.d_out..2 * self.d_out).collect();
        let a_centre = tape.gather_rows(a, &first)?;
        let a_nb = tape.gather_rows(a, &second)?;
        let s_centre = tape.matmul(z, a_centre)?;
        let s_nb = tape.matmul(z, a_nb)?;
        let s_i = tape.gather_rows(s_centre, &edges.dst)?;
        let s_j = tape.gather_rows(s_nb, &edges.src)?;
        let s = tape.add(s_i, s_j)?;
        let s = tape.relu(s);
        let e = tape.exp(s);
        let alpha = tape.segment_softmax(e, &edges.dst)?;
        Ok((z, alpha))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        edges: &AttentionEdges,
    ) -> Result<Var, AutodiffError> {
        let (z, alpha) = self.attention(tape, store, h, edges)?;
        let msgs = tape.gather_rows(z, &edges.src)?;
        let msgs = tape.scale_rows(msgs, alpha)?;
        let agg = tape.scatter_add_rows(edges.n, &edges.dst, msgs)?;
        Ok(tape.relu(agg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(d_in: usize, d_out: usize) -> (ParamStore, GatLayer) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = GatLayer::new(&mut store, &mut rng, "g", d_in, d_out);
        (store, l)
    }

    #[test]
    fn isolated_node_attends_to_itself() {
        let (store, l) = layer(2, 2);
        let edges = AttentionEdges::from_pairs(1, []);
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_rows(&[&[0.3, -0.7]]));
        let (_, alpha) = l.attention(&mut tape, &store, h, &edges).unwrap();
        assert_eq!(tape.value(alpha).data(), &[1.0]);
    }

    #[test]
    fn identical_neighbours_share_attention() {
        let (store, l) = layer(2, 2);
        let edges = AttentionEdges::from_pairs(3, [(0, 1), (2, 0)]);
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::filled(3, 2, 0.4));
        let (_, alpha) = l.attention(&mut tape, &store, h, &edges).unwrap();
        let centre0: Vec<f64> = edges
            .pairs()
            .zip(tape.value(alpha).data())
            .filter(|((i, _), _)| *i == 0)
            .map(|(_, &a)| a)
            .collect();
        assert_eq!(centre0.len(), 3);
        for a in centre0 {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_four_nodes() {
        // Path 0-1-2 plus isolated 3, W = I, a = (1, 0, 0, 1).
        let (mut store, l) = layer(2, 2);
        store.get_mut(l.w).value = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        store.get_mut(l.a).value = Tensor::column_vector(&[1.0, 0.0, 0.0, 1.0]);
        let edges = AttentionEdges::from_pairs(4, [(0, 1), (1, 2)]);
        let hm = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, -1.0], &[-2.0, 2.0]]);
        let mut tape = Tape::new();
        let h = tape.constant(hm.clone());
        let out = l.forward(&mut tape, &store, h, &edges).unwrap();

        // score(i, j) = exp(relu(h_i[0] + h_j[1])); softmax over j ∈ N_i ∪ {i}.
        let score = |i: usize, j: usize| (hm.get(i, 0) + hm.get(j, 1)).max(0.0).exp();
        let neighbours = [vec![0, 1], vec![0, 1, 2], vec![1, 2], vec![3]];
        for (i, nb) in neighbours.iter().enumerate() {
            let w: Vec<f64> = nb.iter().map(|&j| score(i, j).exp()).collect();
            let total: f64 = w.iter().sum();
            for c in 0..2 {
                let v: f64 = nb.iter().zip(&w).map(|(&j, wj)| wj / total * hm.get(j, c)).sum();
                let got = tape.value(out).get(i, c);
                assert!((got - v.max(0.0)).abs() <= 1e-12, "node {i} col {c}: {got} vs {v}");
            }
        }
    }

    #[test]
    fn alpha_sums_to_one_per_centre() {
        let (store, l) = layer(3, 4);
        let edges = AttentionEdges::from_pairs(5, [(0, 1), (1, 2), (2, 3), (3, 0), (4, 4)]);
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = tape.constant(Tensor::from_vec(5, 3, data).unwrap());
        let (_, alpha) = l.attention(&mut tape, &store, h, &edges).unwrap();
        let mut sums = [0.0; 5];
        for ((i, _), a) in edges.pairs().zip(tape.value(alpha).data()) {
            sums[i] += a;
        }
        for s in sums {
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}
