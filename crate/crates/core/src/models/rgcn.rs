//! Relational graph convolution.
//!
//! `h_i' = ReLU(h_i W_0 + Σ_r Σ_{s ∈ N_r(i)} h_s W_r / |N_r(i)|)` where
//! `N_r(i)` are the in-neighbours of `i` under relation `r`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Tensor, Var};

/// Directed edges grouped by relation, with the `1/|N_r(i)|` coefficient of
/// each edge precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct RelEdges {
    n: usize,
    groups: Vec<RelGroup>,
}

#[derive(Debug, Clone, PartialEq)]
struct RelGroup {
    relation: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    coef: Tensor,
}

impl RelEdges {
    /// `edges` are `(src, relation, dst)`; relations are model relation
    /// indices. Groups are kept in ascending relation order.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, usize)>) -> Self {
        let mut by_rel: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (s, r, d) in edges {
            by_rel.entry(r).or_default().push((s, d));
        }
        let groups = by_rel
            .into_iter()
            .map(|(relation, mut pairs)| {
                pairs.sort_unstable();
                let mut indeg = vec![0usize; n];
                for &(_, d) in &pairs {
                    indeg[d] += 1;
                }
                let coef: Vec<f64> = pairs.iter().map(|&(_, d)| 1.0 / indeg[d] as f64).collect();
                RelGroup {
                    relation,
                    src: pairs.iter().map(|p| p.0).collect(),
                    dst: pairs.iter().map(|p| p.1).collect(),
                    coef: Tensor::column_vector(&coef),
                }
            })
            .collect();
        Self { n, groups }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.groups.iter().map(|g| g.src.len()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct RgcnLayer {
    pub w0: ParamId,
    pub w_r: Vec<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl RgcnLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        relations: usize,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        let w0 = store.add_xavier(format!("{prefix}.w0"), d_in, d_out, rng);
        let w_r = (0..relations)
            .map(|r| store.add_xavier(format!("{prefix}.w_r{r}"), d_in, d_out, rng))
            .collect();
        Self { w0, w_r, d_in, d_out }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        edges: &RelEdges,
    ) -> Result<Var, AutodiffError> {
        if tape.value(h).rows() != edges.n {
            return Err(AutodiffError::ShapeMismatch {
                op: "rgcn_layer",
                left: tape.value(h).shape(),
                right: (edges.n, self.d_in),
            });
        }
        let w0 = tape.param(store, self.w0);
        let mut acc = tape.matmul(h, w0)?;
        for g in &edges.groups {
            let Some(&wr) = self.w_r.get(g.relation) else {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "rgcn_layer relation",
                    index: g.relation,
                    len: self.w_r.len(),
                });
            };
            let msgs = tape.gather_rows(h, &g.src)?;
            let coef = tape.constant(g.coef.clone());
            let msgs = tape.scale_rows(msgs, coef)?;
            let agg = tape.scatter_add_rows(edges.n, &g.dst, msgs)?;
            let wr = tape.param(store, wr);
            let term = tape.matmul(agg, wr)?;
            acc = tape.add(acc, term)?;
        }
        Ok(tape.relu(acc))
    }
}
