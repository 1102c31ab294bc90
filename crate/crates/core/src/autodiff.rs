//! Reverse-mode differentiation over matrix operations.
//!
//! A [`Tape`] records every operation of one forward pass. Leaves are either
//! constants or parameters pulled from a [`ParamStore`]; calling
//! [`Tape::grad`] on a scalar output walks the record backwards and returns
//! one gradient per parameter in the store. The tape is dropped after the
//! backward pass.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Csr, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    MulScalar(usize, usize),
    Scale(usize, f64),
    MulConst(usize, Tensor),
    Relu(usize),
    LeakyRelu(usize, f64),
    Exp(usize),
    Ln(usize, f64),
    Recip(usize, f64),
    Clamp(usize, f64, f64),
    SoftmaxRows(usize),
    NormalizeRows(usize, Vec<f64>),
    SumAll(usize),
    MeanAll(usize),
    SumCols(usize),
    SumRows(usize),
    GatherRows(usize, Vec<usize>),
    GatherCols(usize, Vec<usize>),
    Pick(usize, Vec<usize>),
    Element(usize, usize),
    SpMM(Arc<Csr>, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of one scalar with respect to every parameter of a store.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }
}

/// Record of one forward computation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> &Node {
        assert_eq!(v.tape, self.id, "variable from a different tape");
        &self.nodes[v.idx]
    }

    fn rg(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Const, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.binary(a, b, v, Op::MatMul(a.idx, b.idx))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a.idx))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.binary(a, b, v, Op::Add(a.idx, b.idx))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.binary(a, b, v, Op::Sub(a.idx, b.idx))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.binary(a, b, v, Op::Mul(a.idx, b.idx))
    }

    /// `a + b` with `b` a `[1 x cols]` row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = broadcast_rows(self.value(a), self.value(b), |x, y| x + y);
        self.binary(a, b, v, Op::AddRow(a.idx, b.idx))
    }

    /// `a ⊙ w` with `w` a `[1 x cols]` row broadcast over every row of `a`.
    pub fn mul_row(&mut self, a: Var, w: Var) -> Var {
        let v = broadcast_rows(self.value(a), self.value(w), |x, y| x * y);
        self.binary(a, w, v, Op::MulRow(a.idx, w.idx))
    }

    /// Scales row `i` of `a` by `c[i]`, with `c` shaped `[rows x 1]`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        let av = self.value(a);
        let cv = self.value(c);
        assert_eq!(av.rows(), cv.numel(), "mul_col length");
        let cols = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(k, &x)| x * cv.data()[k / cols])
            .collect();
        let v = Tensor::matrix(av.rows(), cols, data);
        self.binary(a, c, v, Op::MulCol(a.idx, c.idx))
    }

    /// `a * s` for a one-element `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s).item();
        let v = self.value(a).map(|x| x * sv);
        self.binary(a, s, v, Op::MulScalar(a.idx, s.idx))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.unary(a, v, Op::Scale(a.idx, c))
    }

    /// Elementwise product with a constant tensor (masks, dropout).
    pub fn mul_const(&mut self, a: Var, m: Tensor) -> Var {
        let v = self.value(a).zip_map(&m, |x, y| x * y);
        self.unary(a, v, Op::MulConst(a.idx, m))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x < 0.0 { 0.0 } else { x });
        self.unary(a, v, Op::Relu(a.idx))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(a, v, Op::LeakyRelu(a.idx, slope))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.unary(a, v, Op::Exp(a.idx))
    }

    /// `ln(max(a, floor))`; no gradient flows below the floor. NaN passes through.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        let v = self
            .value(a)
            .map(|x| if x < floor { floor } else { x }.ln());
        self.unary(a, v, Op::Ln(a.idx, floor))
    }

    /// `1/a` where `a > eps`, else 0. NaN passes through.
    pub fn recip_guarded(&mut self, a: Var, eps: f64) -> Var {
        let v = self.value(a).map(|x| if x <= eps { 0.0 } else { 1.0 / x });
        self.unary(a, v, Op::Recip(a.idx, eps))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, v, Op::Clamp(a.idx, lo, hi))
    }

    /// Row-wise softmax restricted to `mask`; entries outside the mask are
    /// exactly zero and rows with no support are all-zero.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let v = crate::ops::softmax_rows(self.value(a), mask);
        self.unary(a, v, Op::SoftmaxRows(a.idx))
    }

    /// Scales each row to unit Euclidean norm; rows with norm below `eps`
    /// become zero.
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Var {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let mut norms = Vec::with_capacity(r);
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = av.row(i);
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < eps {
                norms.push(0.0);
                data.extend(std::iter::repeat_n(0.0, c));
            } else {
                norms.push(n);
                data.extend(row.iter().map(|x| x / n));
            }
        }
        let v = Tensor::matrix(r, c, data);
        self.unary(a, v, Op::NormalizeRows(a.idx, norms))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.unary(a, v, Op::SumAll(a.idx))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.numel() as f64);
        self.unary(a, v, Op::MeanAll(a.idx))
    }

    /// Sums each row: `[r x c] -> [r x 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|i| t.row(i).iter().sum()).collect();
        let v = Tensor::matrix(t.rows(), 1, data);
        self.unary(a, v, Op::SumCols(a.idx))
    }

    /// Sums each column: `[r x c] -> [1 x c]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut data = vec![0.0; c];
        for i in 0..t.rows() {
            for (d, x) in data.iter_mut().zip(t.row(i)) {
                *d += x;
            }
        }
        let v = Tensor::matrix(1, c, data);
        self.unary(a, v, Op::SumRows(a.idx))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let v = Tensor::matrix(idx.len(), c, data);
        self.unary(a, v, Op::GatherRows(a.idx, idx.to_vec()))
    }

    pub fn gather_cols(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let r = t.rows();
        let mut data = Vec::with_capacity(idx.len() * r);
        for i in 0..r {
            data.extend(idx.iter().map(|&j| t.get(i, j)));
        }
        let v = Tensor::matrix(r, idx.len(), data);
        self.unary(a, v, Op::GatherCols(a.idx, idx.to_vec()))
    }

    /// Selects column `cols[i]` from row `i`: `[r x c] -> [r x 1]`.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows(), cols.len(), "pick needs one column per row");
        let data = cols.iter().enumerate().map(|(i, &j)| t.get(i, j)).collect();
        let v = Tensor::matrix(cols.len(), 1, data);
        self.unary(a, v, Op::Pick(a.idx, cols.to_vec()))
    }

    /// One element (by flat row-major index) as a scalar.
    pub fn element(&mut self, a: Var, flat: usize) -> Var {
        let v = Tensor::scalar(self.value(a).data()[flat]);
        self.unary(a, v, Op::Element(a.idx, flat))
    }

    /// Constant sparse matrix times `a`.
    pub fn spmm(&mut self, s: Arc<Csr>, a: Var) -> Var {
        let v = s.matmul(self.value(a));
        self.unary(a, v, Op::SpMM(s, a.idx))
    }

    /// Gradient of the scalar `output` with respect to every parameter in
    /// `store`. Parameters the output does not depend on get zeros.
    pub fn grad(&self, output: Var, store: &ParamStore) -> Result<Gradients> {
        if output.tape != self.id {
            return Err(Error::ForeignVariable);
        }
        let out = &self.nodes[output.idx];
        if !out.value.is_scalar() {
            return Err(Error::NonScalarOutput(out.value.shape().to_vec()));
        }
        if !out.requires_grad {
            return Err(Error::Detached);
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; output.idx + 1];
        grads[output.idx] = Some(Tensor::full(out.value.shape(), 1.0));
        let mut result = Gradients::zeros_like(store);

        for i in (0..=output.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backprop_node(node, &g, &mut grads, &mut result);
        }
        Ok(result)
    }

    fn backprop_node(
        &self,
        node: &Node,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        result: &mut Gradients,
    ) {
        let val = |i: usize| &self.nodes[i].value;
        let mut acc = |i: usize, d: Tensor| {
            if !self.nodes[i].requires_grad {
                return;
            }
            match &mut grads[i] {
                Some(existing) => existing.add_assign(&d),
                slot => *slot = Some(d),
            }
        };

        match &node.op {
            Op::Const => {}
            Op::Param(id) => result.grads[id.index()].add_assign(g),
            Op::MatMul(a, b) => {
                if self.nodes[*a].requires_grad {
                    acc(*a, g.matmul(&val(*b).transpose()));
                }
                if self.nodes[*b].requires_grad {
                    acc(*b, val(*a).transpose().matmul(g));
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                acc(*b, column_sums(g));
            }
            Op::MulRow(a, w) => {
                acc(*a, broadcast_rows(g, val(*w), |x, y| x * y));
                acc(*w, column_sums(&g.zip_map(val(*a), |x, y| x * y)));
            }
            Op::MulCol(a, c) => {
                let av = val(*a);
                let cv = val(*c);
                let cols = av.cols();
                let da = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| x * cv.data()[k / cols])
                    .collect();
                acc(*a, Tensor::matrix(av.rows(), cols, da));
                let dc = (0..av.rows())
                    .map(|i| g.row(i).iter().zip(av.row(i)).map(|(x, y)| x * y).sum())
                    .collect::<Vec<f64>>();
                acc(*c, Tensor::new(cv.shape().to_vec(), dc).expect("shape"));
            }
            Op::MulScalar(a, s) => {
                let sv = val(*s).item();
                acc(*a, g.map(|x| x * sv));
                let ds = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(x, y)| x * y)
                    .sum();
                acc(*s, Tensor::full(val(*s).shape(), ds));
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
            Op::MulConst(a, m) => acc(*a, g.zip_map(m, |x, y| x * y)),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
            Op::LeakyRelu(a, slope) => acc(
                *a,
                g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { slope * x }),
            ),
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y)),
            Op::Ln(a, floor) => acc(
                *a,
                g.zip_map(val(*a), |x, y| if y > *floor { x / y } else { 0.0 }),
            ),
            Op::Recip(a, eps) => acc(
                *a,
                g.zip_map(val(*a), |x, y| if y > *eps { -x / (y * y) } else { 0.0 }),
            ),
            Op::Clamp(a, lo, hi) => acc(
                *a,
                g.zip_map(val(*a), |x, y| if y >= *lo && y <= *hi { x } else { 0.0 }),
            ),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let (r, c) = (y.rows(), y.cols());
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    let yr = y.row(i);
                    let gr = g.row(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        d[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, Tensor::matrix(r, c, d));
            }
            Op::NormalizeRows(a, norms) => {
                let y = &node.value;
                let (r, c) = (y.rows(), y.cols());
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    if norms[i] == 0.0 {
                        continue;
                    }
                    let yr = y.row(i);
                    let gr = g.row(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        d[i * c + j] = (gr[j] - yr[j] * dot) / norms[i];
                    }
                }
                acc(*a, Tensor::matrix(r, c, d));
            }
            Op::SumAll(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
            Op::MeanAll(a) => {
                let n = val(*a).numel() as f64;
                acc(*a, Tensor::full(val(*a).shape(), g.item() / n));
            }
            Op::SumCols(a) => {
                let av = val(*a);
                let c = av.cols();
                let d = (0..av.numel()).map(|k| g.data()[k / c]).collect();
                acc(*a, Tensor::matrix(av.rows(), c, d));
            }
            Op::SumRows(a) => {
                let av = val(*a);
                let c = av.cols();
                let d = (0..av.numel()).map(|k| g.data()[k % c]).collect();
                acc(*a, Tensor::matrix(av.rows(), c, d));
            }
            Op::GatherRows(a, idx) => {
                let av = val(*a);
                let mut d = Tensor::zeros(av.shape());
                let c = av.cols();
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        d.data_mut()[i * c + j] += g.get(r, j);
                    }
                }
                acc(*a, d);
            }
            Op::GatherCols(a, idx) => {
                let av = val(*a);
                let mut d = Tensor::zeros(av.shape());
                let c = av.cols();
                for i in 0..av.rows() {
                    for (k, &j) in idx.iter().enumerate() {
                        d.data_mut()[i * c + j] += g.get(i, k);
                    }
                }
                acc(*a, d);
            }
            Op::Pick(a, cols) => {
                let av = val(*a);
                let mut d = Tensor::zeros(av.shape());
                for (i, &j) in cols.iter().enumerate() {
                    d.set(i, j, g.data()[i]);
                }
                acc(*a, d);
            }
            Op::Element(a, flat) => {
                let mut d = Tensor::zeros(val(*a).shape());
                d.data_mut()[*flat] = g.item();
                acc(*a, d);
            }
            Op::SpMM(s, a) => acc(*a, s.t_matmul(g)),
        }
    }
}

fn broadcast_rows(a: &Tensor, row: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let c = a.cols();
    assert_eq!(row.numel(), c, "row broadcast length");
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(k, &x)| f(x, row.data()[k % c]))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

fn column_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for i in 0..g.rows() {
        for (o, x) in out.iter_mut().zip(g.row(i)) {
            *o += x;
        }
    }
    Tensor::matrix(1, c, out)
}
