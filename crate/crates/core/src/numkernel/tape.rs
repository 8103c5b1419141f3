//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! Every forward op appends one node holding its value and the ids of its
//! inputs. `backward` walks the node list in reverse exactly once. Sparse
//! operands are borrowed constants and never receive gradients.

use super::dense::{dot, DenseMatrix};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Inputs to `sigmoid` are clamped to this range before `exp`.
pub const SIGMOID_CLAMP: f64 = 30.0;
/// `log` arguments are floored here.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Op kinds, exposed for fault injection in gradient-check mutation tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    MatMulT,
    SpMM,
    Add,
    Sub,
    AddRowBias,
    Mul,
    Scale,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Softplus,
    RowSoftmax,
    RowLogSoftmax,
    ConcatCols,
    SliceCols,
    SliceRows,
    GatherRows,
    RowSum,
    Sum,
    WeightedSum,
    DotConst,
    Clamp,
}

impl OpKind {
    pub const ALL: [OpKind; 25] = [
        OpKind::Leaf,
        OpKind::MatMul,
        OpKind::MatMulT,
        OpKind::SpMM,
        OpKind::Add,
        OpKind::Sub,
        OpKind::AddRowBias,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Tanh,
        OpKind::Sigmoid,
        OpKind::Exp,
        OpKind::Log,
        OpKind::Softplus,
        OpKind::RowSoftmax,
        OpKind::RowLogSoftmax,
        OpKind::ConcatCols,
        OpKind::SliceCols,
        OpKind::SliceRows,
        OpKind::GatherRows,
        OpKind::RowSum,
        OpKind::Sum,
        OpKind::WeightedSum,
        OpKind::DotConst,
        OpKind::Clamp,
    ];
}

impl std::str::FromStr for OpKind {
    type Err = String;

    /// Case-insensitive match on the variant name.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|k| format!("{k:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown op kind `{s}`"))
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    SpMM(&'a SparseMatrix, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    RowSum(Var),
    Sum(Var),
    WeightedSum(Vec<(Var, f64)>),
    DotConst(Var, DenseMatrix),
    Clamp(Var, f64, f64),
}

impl Op<'_> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatMulT(..) => OpKind::MatMulT,
            Op::SpMM(..) => OpKind::SpMM,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::AddRowBias(..) => OpKind::AddRowBias,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Exp(_) => OpKind::Exp,
            Op::Log(_) => OpKind::Log,
            Op::Softplus(_) => OpKind::Softplus,
            Op::RowSoftmax(_) => OpKind::RowSoftmax,
            Op::RowLogSoftmax(_) => OpKind::RowLogSoftmax,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::SliceCols(..) => OpKind::SliceCols,
            Op::SliceRows(..) => OpKind::SliceRows,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::RowSum(_) => OpKind::RowSum,
            Op::Sum(_) => OpKind::Sum,
            Op::WeightedSum(_) => OpKind::WeightedSum,
            Op::DotConst(..) => OpKind::DotConst,
            Op::Clamp(..) => OpKind::Clamp,
        }
    }
}

struct Node<'a> {
    value: DenseMatrix,
    op: Op<'a>,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; zeros when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> DenseMatrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> DenseMatrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    fault: Option<OpKind>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            fault: None,
        }
    }

    /// Corrupt the backward rule of one op kind (scales its input gradient by
    /// 1.5). Only for mutation tests of the gradient checker.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    fn push(&mut self, value: DenseMatrix, op: Op<'a>, needs_grad: bool) -> Var {
        debug_assert!(
            value.is_finite() || !matches!(op, Op::Leaf),
            "non-finite leaf"
        );
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMulT(a, b), ng))
    }

    pub fn spmm(&mut self, s: &'a SparseMatrix, d: Var) -> Result<Var> {
        let v = s.spmm(self.value(d))?;
        let ng = self.ng(d);
        Ok(self.push(v, Op::SpMM(s, d), ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    /// `a + 1·bias` where `bias` is a 1×cols row vector.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        if self.value(bias).shape() != (1, c) {
            return Err(Error::shape(
                "add_row_bias",
                format!("bias {:?} for {r}x{c}", self.value(bias).shape()),
            ));
        }
        let b = self.value(bias).row(0).to_vec();
        let mut v = self.value(a).clone();
        for i in 0..r {
            for (x, bb) in v.row_mut(i).iter_mut().zip(&b) {
                *x += bb;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(v, Op::AddRowBias(a, bias), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let ng = self.ng(a);
        self.push(v, Op::Exp(a), ng)
    }

    /// Natural log with the argument floored at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        let ng = self.ng(a);
        self.push(v, Op::Log(a), ng)
    }

    /// `ln(1 + eˣ)`, evaluated stably for any finite input.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        let ng = self.ng(a);
        self.push(v, Op::Softplus(a), ng)
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for i in 0..x.rows() {
            softmax_in_place(v.row_mut(i));
        }
        let ng = self.ng(a);
        self.push(v, Op::RowSoftmax(a), ng)
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for i in 0..x.rows() {
            let row = v.row_mut(i);
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|r| *r -= lse);
        }
        let ng = self.ng(a);
        self.push(v, Op::RowLogSoftmax(a), ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hcat(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::ConcatCols(a, b), ng))
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let c = self.value(a).cols();
        if start > end || end > c {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {end}) of {c} columns"),
            ));
        }
        let v = self.value(a).slice_cols(start, end);
        let ng = self.ng(a);
        Ok(self.push(v, Op::SliceCols(a, start), ng))
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let r = self.value(a).rows();
        if start > end || end > r {
            return Err(Error::shape("slice_rows", format!("[{start}, {end}) of {r} rows")));
        }
        let v = self.value(a).slice_rows(start, end);
        let ng = self.ng(a);
        Ok(self.push(v, Op::SliceRows(a, start), ng))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} of {}", x.rows()),
            ));
        }
        let mut v = DenseMatrix::zeros(idx.len(), x.cols());
        for (o, &i) in idx.iter().enumerate() {
            v.row_mut(o).copy_from_slice(x.row(i));
        }
        let ng = self.ng(a);
        Ok(self.push(v, Op::GatherRows(a, idx.to_vec()), ng))
    }

    /// rows×1 column of row sums.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = DenseMatrix::from_fn(x.rows(), 1, |i, _| x.row(i).iter().sum());
        let ng = self.ng(a);
        self.push(v, Op::RowSum(a), ng)
    }

    /// 1×1 sum of all entries.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = DenseMatrix::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(v, Op::Sum(a), ng)
    }

    /// `Σ cᵢ·aᵢ` over same-shaped inputs.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::shape("weighted_sum", "no terms"));
        };
        let (r, c) = self.value(first).shape();
        let mut v = DenseMatrix::zeros(r, c);
        for &(t, w) in terms {
            if self.value(t).shape() != (r, c) {
                return Err(Error::shape(
                    "weighted_sum",
                    format!("{:?} vs {:?}", self.value(t).shape(), (r, c)),
                ));
            }
            v.axpy(w, self.value(t));
        }
        let ng = terms.iter().any(|&(t, _)| self.ng(t));
        Ok(self.push(v, Op::WeightedSum(terms.to_vec()), ng))
    }

    /// Scalar `Σ a ⊙ weights` with constant `weights`.
    pub fn dot_const(&mut self, a: Var, weights: DenseMatrix) -> Result<Var> {
        if self.value(a).shape() != weights.shape() {
            return Err(Error::shape(
                "dot_const",
                format!("{:?} vs {:?}", self.value(a).shape(), weights.shape()),
            ));
        }
        let v = DenseMatrix::scalar(dot(self.value(a).as_slice(), weights.as_slice()));
        let ng = self.ng(a);
        Ok(self.push(v, Op::DotConst(a, weights), ng))
    }

    /// Clamp to `[lo, hi]`; gradient is zero outside the range.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(v, Op::Clamp(a, lo, hi), ng)
    }

    /// Reverse sweep from a 1×1 `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<DenseMatrix>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            let f = if self.fault == Some(node.op.kind()) {
                1.5
            } else {
                1.0
            };
            self.propagate(&node.op, &node.value, &g, f, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], v: Var, delta: DenseMatrix, f: f64) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.axpy(f, &delta),
            slot @ None => {
                *slot = Some(if f == 1.0 { delta } else { delta.map(|x| f * x) });
            }
        }
    }

    fn propagate(
        &self,
        op: &Op<'a>,
        out: &DenseMatrix,
        g: &DenseMatrix,
        f: f64,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    let da = g.matmul_t(self.value(*b))?;
                    self.accumulate(grads, *a, da, f);
                }
                if self.ng(*b) {
                    let db = self.value(*a).t_matmul(g)?;
                    self.accumulate(grads, *b, db, f);
                }
            }
            Op::MatMulT(a, b) => {
                // out = a bᵀ: da = g b, db = gᵀ a
                if self.ng(*a) {
                    let da = g.matmul(self.value(*b))?;
                    self.accumulate(grads, *a, da, f);
                }
                if self.ng(*b) {
                    let db = g.t_matmul(self.value(*a))?;
                    self.accumulate(grads, *b, db, f);
                }
            }
            Op::SpMM(s, d) => {
                let dd = s.spmm_t(g)?;
                self.accumulate(grads, *d, dd, f);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone(), f);
                self.accumulate(grads, *b, g.clone(), f);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone(), f);
                self.accumulate(grads, *b, g.map(|x| -x), f);
            }
            Op::AddRowBias(a, bias) => {
                self.accumulate(grads, *a, g.clone(), f);
                if self.ng(*bias) {
                    let mut db = DenseMatrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, &x) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                            *d += x;
                        }
                    }
                    self.accumulate(grads, *bias, db, f);
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    self.accumulate(grads, *a, da, f);
                }
                if self.ng(*b) {
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    self.accumulate(grads, *b, db, f);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|x| c * x), f),
            Op::Tanh(a) => {
                let da = g.zip_map(out, |x, y| x * (1.0 - y * y));
                self.accumulate(grads, *a, da, f);
            }
            Op::Sigmoid(a) => {
                let x = self.value(*a);
                let da = DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
                    let xv = x.get(i, j);
                    if xv.abs() > SIGMOID_CLAMP {
                        0.0
                    } else {
                        let s = out.get(i, j);
                        g.get(i, j) * s * (1.0 - s)
                    }
                });
                self.accumulate(grads, *a, da, f);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(out, |x, y| x * y), f),
            Op::Log(a) => {
                let da = g.zip_map(self.value(*a), |x, y| if y > LOG_FLOOR { x / y } else { 0.0 });
                self.accumulate(grads, *a, da, f);
            }
            Op::Softplus(a) => {
                let da = g.zip_map(self.value(*a), |x, y| x * logistic(y));
                self.accumulate(grads, *a, da, f);
            }
            Op::RowSoftmax(a) => {
                let mut da = DenseMatrix::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let (y, gi) = (out.row(i), g.row(i));
                    let s = dot(y, gi);
                    for ((d, &yv), &gv) in da.row_mut(i).iter_mut().zip(y).zip(gi) {
                        *d = yv * (gv - s);
                    }
                }
                self.accumulate(grads, *a, da, f);
            }
            Op::RowLogSoftmax(a) => {
                let mut da = DenseMatrix::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let (y, gi) = (out.row(i), g.row(i));
                    let s: f64 = gi.iter().sum();
                    for ((d, &yv), &gv) in da.row_mut(i).iter_mut().zip(y).zip(gi) {
                        *d = gv - yv.exp() * s;
                    }
                }
                self.accumulate(grads, *a, da, f);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                self.accumulate(grads, *a, g.slice_cols(0, ca), f);
                self.accumulate(grads, *b, g.slice_cols(ca, g.cols()), f);
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let mut da = DenseMatrix::zeros(x.rows(), x.cols());
                for i in 0..g.rows() {
                    da.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *a, da, f);
            }
            Op::SliceRows(a, start) => {
                let x = self.value(*a);
                let mut da = DenseMatrix::zeros(x.rows(), x.cols());
                for i in 0..g.rows() {
                    da.row_mut(start + i).copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *a, da, f);
            }
            Op::GatherRows(a, idx) => {
                let x = self.value(*a);
                let mut da = DenseMatrix::zeros(x.rows(), x.cols());
                for (o, &i) in idx.iter().enumerate() {
                    for (d, &gv) in da.row_mut(i).iter_mut().zip(g.row(o)) {
                        *d += gv;
                    }
                }
                self.accumulate(grads, *a, da, f);
            }
            Op::RowSum(a) => {
                let x = self.value(*a);
                let da = DenseMatrix::from_fn(x.rows(), x.cols(), |i, _| g.get(i, 0));
                self.accumulate(grads, *a, da, f);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, DenseMatrix::filled(r, c, g.item()), f);
            }
            Op::WeightedSum(terms) => {
                for &(t, w) in terms {
                    self.accumulate(grads, t, g.map(|x| w * x), f);
                }
            }
            Op::DotConst(a, w) => {
                let s = g.item();
                self.accumulate(grads, *a, w.map(|x| s * x), f);
            }
            Op::Clamp(a, lo, hi) => {
                let da = g.zip_map(self.value(*a), |x, y| if y >= *lo && y <= *hi { x } else { 0.0 });
                self.accumulate(grads, *a, da, f);
            }
        }
        Ok(())
    }
}

/// Logistic function with the input clamped to ±[`SIGMOID_CLAMP`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    logistic(x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP))
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    xs.iter_mut().for_each(|x| *x /= total);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_of_zero_matrix() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::zeros(2, 3));
        let y = t.tanh(a);
        assert_eq!(t.value(y), &DenseMatrix::zeros(2, 3));
    }

    #[test]
    fn sigmoid_of_zero() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::scalar(0.0));
        let y = t.sigmoid(a);
        assert_eq!(t.value(y).item(), 0.5);
    }

    #[test]
    fn softmax_of_zero_row_is_uniform() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::zeros(1, 3));
        let y = t.row_softmax(a);
        for &v in t.value(y).as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::from_fn(3, 4, |i, j| (i as f64) - (j as f64)));
        let l = t.sum(w);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(w), DenseMatrix::filled(3, 4, 1.0));
    }

    #[test]
    fn sigmoid_times_two_at_zero() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::scalar(0.0));
        let s = t.sigmoid(w);
        let l = t.scale(s, 2.0);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(w).item(), 0.5);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::filled(2, 2, 1.0));
        let unused = t.param(DenseMatrix::filled(3, 1, 1.0));
        let l = t.sum(w);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(unused), DenseMatrix::zeros(3, 1));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::zeros(2, 2));
        assert!(matches!(t.backward(w), Err(Error::Shape { .. })));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut t = Tape::new();
        let a = t.param(DenseMatrix::zeros(2, 2));
        let b = t.param(DenseMatrix::zeros(2, 3));
        assert!(t.add(a, b).is_err());
        assert!(t.mul(a, b).is_err());
        assert!(t.matmul(b, a).is_err());
        let bias = t.param(DenseMatrix::zeros(1, 3));
        assert!(t.add_row_bias(a, bias).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_clamps_extremes() {
        assert!(sigmoid(1e6).is_finite() && sigmoid(-1e6) > 0.0);
    }
}
