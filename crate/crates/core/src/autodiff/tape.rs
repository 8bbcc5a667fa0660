//! Reverse-mode tape.
//!
//! Every op appends a node holding its forward value. `gradients` walks the
//! nodes in exact reverse order and accumulates adjoints additively, so a
//! value used by several downstream ops receives the sum of their adjoints.

use super::params::{ParamId, ParamStore};
use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Exp(Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    MeanRows(Var),
    SumAll(Var),
    SoftmaxRows(Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    ScaleRows(Var, Var),
    SegmentSoftmax(Var, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Adjoints of every recorded value with respect to one scalar.
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`; `None` if `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.adjoints[v.0].as_ref()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Leaf bound to a parameter. Repeated calls for the same id return the
    /// same handle, so all uses share one adjoint.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.index() {
            self.param_vars.resize(id.index() + 1, None);
        }
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param(id));
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(mismatch("matmul", x, y));
        }
        let out = x.matmul(y);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch("add", x, y));
        }
        let mut out = x.clone();
        out.add_assign(y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// `a - b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn elementwise_mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch("elementwise_mul", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(mismatch("concat_cols", x, y));
        }
        let cols = x.cols() + y.cols();
        let mut data = Vec::with_capacity(x.rows() * cols);
        for r in 0..x.rows() {
            data.extend_from_slice(x.row(r));
            data.extend_from_slice(y.row(r));
        }
        let out = Tensor::from_vec(x.rows(), cols, data)?;
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(mismatch("concat_rows", x, y));
        }
        let mut data = x.data().to_vec();
        data.extend_from_slice(y.data());
        let out = Tensor::from_vec(x.rows() + y.rows(), x.cols(), data)?;
        Ok(self.push(out, Op::ConcatRows(a, b)))
    }

    /// Column-wise mean over rows: `r×c → 1×c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(AutodiffError::Empty("mean_rows"));
        }
        let mut out = Tensor::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        let n = x.rows() as f64;
        out.data_mut().iter_mut().for_each(|v| *v /= n);
        Ok(self.push(out, Op::MeanRows(a)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Row-wise softmax with max-shift. A row of width zero stays empty.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for r in 0..x.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        let mut data = Vec::with_capacity(index.len() * x.cols());
        for &i in index {
            if i >= x.rows() {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    len: x.rows(),
                });
            }
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::from_vec(index.len(), x.cols(), data)?;
        Ok(self.push(out, Op::GatherRows(a, index.to_vec())))
    }

    /// `out[index[i]] += a[i]` into a zero tensor of `rows` rows.
    pub fn scatter_add_rows(
        &mut self,
        rows: usize,
        index: &[usize],
        a: Var,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if index.len() != x.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "scatter_add_rows",
                left: x.shape(),
                right: (index.len(), 1),
            });
        }
        let mut out = Tensor::zeros(rows, x.cols());
        for (src, &dst) in index.iter().enumerate() {
            if dst >= rows {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "scatter_add_rows",
                    index: dst,
                    len: rows,
                });
            }
            for (o, v) in out.row_mut(dst).iter_mut().zip(x.row(src)) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, index.to_vec())))
    }

    /// Multiplies row `i` of `a` by `w[i]`, where `w` is a column vector.
    pub fn scale_rows(&mut self, a: Var, w: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(w));
        if y.cols() != 1 || y.rows() != x.rows() {
            return Err(mismatch("scale_rows", x, y));
        }
        let mut out = x.clone();
        for r in 0..x.rows() {
            let s = y.data()[r];
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(out, Op::ScaleRows(a, w)))
    }

    /// Softmax of a column vector within groups: entries sharing the same
    /// `segment[i]` are normalised together.
    pub fn segment_softmax(&mut self, a: Var, segment: &[usize]) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if x.cols() != 1 || x.rows() != segment.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "segment_softmax",
                left: x.shape(),
                right: (segment.len(), 1),
            });
        }
        let n_seg = segment.iter().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (v, &s) in x.data().iter().zip(segment) {
            max[s] = max[s].max(*v);
        }
        let mut out = x.clone();
        let mut sum = vec![0.0; n_seg];
        for (v, &s) in out.data_mut().iter_mut().zip(segment) {
            *v = (*v - max[s]).exp();
            sum[s] += *v;
        }
        for (v, &s) in out.data_mut().iter_mut().zip(segment) {
            *v /= sum[s];
        }
        Ok(self.push(out, Op::SegmentSoftmax(a, segment.to_vec())))
    }

    pub fn gradients(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(AutodiffError::NotAScalar(shape));
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    accumulate(&mut adj, *a, g.matmul_t(y));
                    accumulate(&mut adj, *b, x.t_matmul(&g));
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g.clone());
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&g, y, |p, q| p * q);
                    let gb = zip_map(&g, x, |p, q| p * q);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.map(|v| v * c)),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let ga = zip_map(&g, x, |p, q| if q > 0.0 { p } else { 0.0 });
                    accumulate(&mut adj, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = zip_map(&g, &node.value, |p, q| p * q);
                    accumulate(&mut adj, *a, ga);
                }
                Op::Transpose(a) => accumulate(&mut adj, *a, g.transpose()),
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut ga = Tensor::zeros(g.rows(), ca);
                    let mut gb = Tensor::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::ConcatRows(a, b) => {
                    let (ra, c) = self.value(*a).shape();
                    let split = ra * c;
                    let ga = Tensor::from_vec(ra, c, g.data()[..split].to_vec())?;
                    let gb = Tensor::from_vec(g.rows() - ra, c, g.data()[split..].to_vec())?;
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    let n = r as f64;
                    for i in 0..r {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(0)) {
                            *o = v / n;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::SumAll(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Tensor::filled(r, c, g.item()));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                        for ((o, gy), yy) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = yy * (gy - dot);
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::GatherRows(a, index) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for (i, &src) in index.iter().enumerate() {
                        for (o, v) in ga.row_mut(src).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::ScatterAddRows(a, index) => {
                    let c = g.cols();
                    let mut data = Vec::with_capacity(index.len() * c);
                    for &dst in index {
                        data.extend_from_slice(g.row(dst));
                    }
                    accumulate(&mut adj, *a, Tensor::from_vec(index.len(), c, data)?);
                }
                Op::ScaleRows(a, w) => {
                    let (x, y) = (self.value(*a), self.value(*w));
                    let mut ga = g.clone();
                    let mut gw = Tensor::zeros(y.rows(), 1);
                    for r in 0..x.rows() {
                        let s = y.data()[r];
                        ga.row_mut(r).iter_mut().for_each(|v| *v *= s);
                        gw.data_mut()[r] = g.row(r).iter().zip(x.row(r)).map(|(p, q)| p * q).sum();
                    }
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *w, gw);
                }
                Op::SegmentSoftmax(a, segment) => {
                    let y = &node.value;
                    let n_seg = segment.iter().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; n_seg];
                    for ((gy, yy), &s) in g.data().iter().zip(y.data()).zip(segment) {
                        dot[s] += gy * yy;
                    }
                    let mut ga = Tensor::zeros(y.rows(), 1);
                    for (i, &s) in segment.iter().enumerate() {
                        ga.data_mut()[i] = y.data()[i] * (g.data()[i] - dot[s]);
                    }
                    accumulate(&mut adj, *a, ga);
                }
            }
            // Keep leaf adjoints so callers can read them.
            if matches!(node.op, Op::Constant | Op::Param(_)) {
                adj[idx] = Some(g);
            }
        }
        Ok(Gradients { adjoints: adj })
    }

    /// Accumulates `∂loss/∂p` into every parameter that was used on this tape.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), AutodiffError> {
        let grads = self.gradients(loss)?;
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = grads.adjoints[idx].as_ref() {
                    store.get_mut(id).grad.add_assign(g);
                }
            }
        }
        Ok(())
    }
}

fn softmax_in_place(row: &mut [f64]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
