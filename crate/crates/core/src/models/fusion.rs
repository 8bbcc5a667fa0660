//! Self-attention fusion of the two view vectors.

use rand::Rng;

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone)]
pub struct FusionHead {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_m: ParamId,
    pub dim: usize,
}

impl FusionHead {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, dim: usize) -> Self {
        Self {
            w_q: store.add_xavier(format!("{prefix}.w_q"), dim, dim, rng),
            w_k: store.add_xavier(format!("{prefix}.w_k"), dim, dim, rng),
            w_v: store.add_xavier(format!("{prefix}.w_v"), dim, dim, rng),
            w_m: store.add_xavier(format!("{prefix}.w_m"), 2 * dim, 1, rng),
            dim,
        }
    }

    /// `Y = softmax(Q Kᵀ / √d) V` over `X = [e1; e2]`, returned as the 2×d matrix.
    pub fn attend(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        e1: Var,
        e2: Var,
    ) -> Result<Var, AutodiffError> {
        for e in [e1, e2] {
            if tape.value(e).shape() != (1, self.dim) {
                return Err(AutodiffError::ShapeMismatch {
                    op: "fusion input",
                    left: tape.value(e).shape(),
                    right: (1, self.dim),
                });
            }
        }
        let x = tape.concat_rows(e1, e2)?;
        let (wq, wk, wv) = (
            tape.param(store, self.w_q),
            tape.param(store, self.w_k),
            tape.param(store, self.w_v),
        );
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let kt = tape.transpose(k);
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, 1.0 / (self.dim as f64).sqrt());
        let attn = tape.softmax_rows(scores);
        tape.matmul(attn, v)
    }

    /// `[Y_1 ⊕ Y_2] W_m`, a 1×1 value.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        e1: Var,
        e2: Var,
    ) -> Result<Var, AutodiffError> {
        let y = self.attend(tape, store, e1, e2)?;
        let y1 = tape.gather_rows(y, &[0])?;
        let y2 = tape.gather_rows(y, &[1])?;
        let flat = tape.concat_cols(y1, y2)?;
        let wm = tape.param(store, self.w_m);
        tape.matmul(flat, wm)
    }
}

/// `[e1 ⊕ e2] W`, the head used when the attention step is skipped.
pub fn concat_linear(
    tape: &mut Tape,
    store: &ParamStore,
    e1: Var,
    e2: Var,
    w: ParamId,
) -> Result<Var, AutodiffError> {
    let flat = tape.concat_cols(e1, e2)?;
    let w = tape.param(store, w);
    tape.matmul(flat, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(dim: usize) -> (ParamStore, FusionHead, ChaCha8Rng) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let head = FusionHead::new(&mut store, &mut rng, "f", dim);
        (store, head, rng)
    }

    fn random_row(rng: &mut ChaCha8Rng, d: usize) -> Tensor {
        Tensor::row_vector(&(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    #[test]
    fn zero_query_key_gives_uniform_mix() {
        let (mut store, head, mut rng) = setup(4);
        store.get_mut(head.w_q).value.fill(0.0);
        store.get_mut(head.w_k).value.fill(0.0);
        let (a, b) = (random_row(&mut rng, 4), random_row(&mut rng, 4));
        let mut tape = Tape::new();
        let (e1, e2) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let y = head.attend(&mut tape, &store, e1, e2).unwrap();
        let wv = &store.get(head.w_v).value;
        let (va, vb) = (a.matmul(wv), b.matmul(wv));
        for c in 0..4 {
            let mean = 0.5 * (va.get(0, c) + vb.get(0, c));
            for r in 0..2 {
                assert!((tape.value(y).get(r, c) - mean).abs() < 1e-15);
            }
        }

        // Same value as the concat head on (mean V, mean V) with the same W_m.
        let out = head.forward(&mut tape, &store, e1, e2).unwrap();
        let mut m = va.clone();
        m.add_assign(&vb);
        let m = m.map(|x| 0.5 * x);
        let mv = tape.constant(m);
        let alt = concat_linear(&mut tape, &store, mv, mv, head.w_m).unwrap();
        assert!((tape.value(out).item() - tape.value(alt).item()).abs() < 1e-14);
    }

    #[test]
    fn zero_output_matrix_predicts_zero() {
        let (mut store, head, mut rng) = setup(3);
        store.get_mut(head.w_m).value.fill(0.0);
        let mut tape = Tape::new();
        let e1 = tape.constant(random_row(&mut rng, 3));
        let e2 = tape.constant(random_row(&mut rng, 3));
        let out = head.forward(&mut tape, &store, e1, e2).unwrap();
        assert_eq!(tape.value(out).item(), 0.0);
    }

    #[test]
    fn matches_manual_evaluation() {
        let (store, head, mut rng) = setup(3);
        let (a, b) = (random_row(&mut rng, 3), random_row(&mut rng, 3));
        let mut tape = Tape::new();
        let (e1, e2) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let out = head.forward(&mut tape, &store, e1, e2).unwrap();
        let out = tape.value(out).item();

        let x = [a.data().to_vec(), b.data().to_vec()];
        let mul = |row: &[f64], w: &Tensor| -> Vec<f64> {
            (0..w.cols()).map(|c| (0..row.len()).map(|k| row[k] * w.get(k, c)).sum()).collect()
        };
        let p = |id| &store.get(id).value;
        let q: Vec<Vec<f64>> = x.iter().map(|r| mul(r, p(head.w_q))).collect();
        let k: Vec<Vec<f64>> = x.iter().map(|r| mul(r, p(head.w_k))).collect();
        let v: Vec<Vec<f64>> = x.iter().map(|r| mul(r, p(head.w_v))).collect();
        let mut flat = Vec::new();
        for qi in &q {
            let s: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() / 3f64.sqrt())
                .collect();
            let z: f64 = s.iter().map(|x| x.exp()).sum();
            for c in 0..3 {
                flat.push((0..2).map(|j| s[j].exp() / z * v[j][c]).sum::<f64>());
            }
        }
        let wm = p(head.w_m);
        let manual: f64 = flat.iter().enumerate().map(|(i, f)| f * wm.get(i, 0)).sum();
        assert!((out - manual).abs() <= 1e-12, "{out} vs {manual}");
    }

    #[test]
    fn concat_head_ignores_zero_second_view() {
        let (mut store, _, mut rng) = setup(2);
        let w = store.add_xavier("w", 4, 1, &mut rng);
        let mut tape = Tape::new();
        let a = random_row(&mut rng, 2);
        let e1 = tape.constant(a.clone());
        let e2 = tape.constant(Tensor::zeros(1, 2));
        let out = concat_linear(&mut tape, &store, e1, e2, w).unwrap();
        let wv = &store.get(w).value;
        let expect = a.get(0, 0) * wv.get(0, 0) + a.get(0, 1) * wv.get(1, 0);
        assert!((tape.value(out).item() - expect).abs() < 1e-15);
    }
}
