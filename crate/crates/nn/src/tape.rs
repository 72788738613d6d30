//! Define-by-run reverse-mode differentiation over dense `f64` matrices.
//!
//! Every backward rule is written with tape operations, so the gradients
//! returned by [`Tape::grad`] are ordinary [`Var`]s that can themselves be
//! differentiated. Gradient penalties (a loss on `‖∇ₓ D(x)‖`) rely on this.
//!
//! Values live on the tape for its whole lifetime; build one tape per
//! optimisation step and drop it afterwards.

use std::cell::RefCell;
use std::fmt;
use std::ops;
use std::rc::Rc;

use ndarray::{concatenate, s, Array2, Axis};

pub type Matrix = Array2<f64>;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `a · bᵀ`
    MatMulNT(usize, usize),
    /// `aᵀ · b`
    MatMulTN(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `a (m×n) + r (1×n)` broadcast over rows.
    AddRow(usize, usize),
    /// `a (m×n) * c (m×1)` broadcast over columns.
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Sqrt(usize),
    Ln(usize),
    Recip(usize),
    Square(usize),
    /// Softmax within each run of `width` consecutive columns.
    GroupSoftmax(usize, usize),
    /// Sum within each run of `width` columns, broadcast back over the run.
    GroupSum(usize, usize),
    SumRows(usize),
    SumCols(usize),
    SumAll(usize),
    BroadcastRows(usize),
    BroadcastCols(usize),
    Fill(usize),
    SliceCols(usize, usize),
    PadCols(usize, usize),
    Concat(Vec<usize>),
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | MatMulNT(a, b) | MatMulTN(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b)
            | AddRow(a, b) | MulCol(a, b) => vec![*a, *b],
            Scale(a, _) | AddScalar(a) | Relu(a) | LeakyRelu(a, _) | Tanh(a) | Sigmoid(a)
            | Exp(a) | Sqrt(a) | Ln(a) | Recip(a) | Square(a) | GroupSoftmax(a, _) | GroupSum(a, _)
            | SumRows(a) | SumCols(a)
            | SumAll(a) | BroadcastRows(a) | BroadcastCols(a) | Fill(a) | SliceCols(a, _)
            | PadCols(a, _) => vec![*a],
            Concat(parts) => parts.clone(),
        }
    }
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
}

/// Append-only record of matrix operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Var#{}({}x{})", self.id, r, c)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value_of(&self, id: usize) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Records an input. Leaves are differentiable only if passed as `wrt` to [`Tape::grad`].
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Var<'_> {
        self.leaf(Array2::zeros((rows, cols)))
    }

    /// Gradient of `sum(output)` with respect to each of `wrt`.
    ///
    /// Only nodes lying on a path from some `wrt` entry to `output` are
    /// visited. The result is recorded on the tape and is differentiable.
    /// Entries of `wrt` that do not influence `output` get an all-zero gradient.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Vec<Var<'t>> {
        let n = output.id + 1;
        let ops: Vec<Op> = self.nodes.borrow()[..n].iter().map(|node| node.op.clone()).collect();
        let mut reach = vec![false; n];
        for w in wrt {
            if w.id < n {
                reach[w.id] = true;
            }
        }
        for i in 0..n {
            if !reach[i] && ops[i].parents().iter().any(|&p| reach[p]) {
                reach[i] = true;
            }
        }

        let mut grads: Vec<Option<Var<'t>>> = vec![None; n];
        if reach[output.id] {
            let (r, c) = output.shape();
            grads[output.id] = Some(self.leaf(Array2::ones((r, c))));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if matches!(ops[i], Op::Leaf) {
                continue;
            }
            let y = Var { tape: self, id: i };
            for (p, contribution) in self.backward_rule(&ops[i], y, g, &reach) {
                grads[p] = Some(match grads[p] {
                    Some(prev) => prev + contribution,
                    None => contribution,
                });
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = w.shape();
                    self.zeros(r, c)
                }
            })
            .collect()
    }

    /// Convenience wrapper: plain gradient matrices for `wrt`.
    pub fn gradients<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Vec<Matrix> {
        self.grad(output, wrt).iter().map(|g| (*g.value()).clone()).collect()
    }

    fn backward_rule<'t>(
        &'t self,
        op: &Op,
        y: Var<'t>,
        g: Var<'t>,
        reach: &[bool],
    ) -> Vec<(usize, Var<'t>)> {
        let v = |id: usize| Var { tape: self, id };
        let mut out = Vec::with_capacity(2);
        let mut emit = |id: usize, f: &dyn Fn() -> Var<'t>| {
            if reach[id] {
                out.push((id, f()));
            }
        };
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                emit(a, &|| g.matmul_nt(v(b)));
                emit(b, &|| v(a).matmul_tn(g));
            }
            Op::MatMulNT(a, b) => {
                emit(a, &|| g.matmul(v(b)));
                emit(b, &|| g.matmul_tn(v(a)));
            }
            Op::MatMulTN(a, b) => {
                emit(a, &|| v(b).matmul_nt(g));
                emit(b, &|| v(a).matmul(g));
            }
            Op::Add(a, b) => {
                emit(a, &|| g);
                emit(b, &|| g);
            }
            Op::Sub(a, b) => {
                emit(a, &|| g);
                emit(b, &|| -g);
            }
            Op::Mul(a, b) => {
                emit(a, &|| g * v(b));
                emit(b, &|| g * v(a));
            }
            Op::AddRow(a, r) => {
                emit(a, &|| g);
                emit(r, &|| g.sum_rows());
            }
            Op::MulCol(a, c) => {
                emit(a, &|| g.mul_col(v(c)));
                emit(c, &|| (g * v(a)).sum_cols());
            }
            Op::Scale(a, k) => emit(a, &|| g.scale(k)),
            Op::AddScalar(a) => emit(a, &|| g),
            Op::Relu(a) => emit(a, &|| {
                let mask = v(a).value().mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                g * self.leaf(mask)
            }),
            Op::LeakyRelu(a, slope) => emit(a, &|| {
                let mask = v(a).value().mapv(|x| if x > 0.0 { 1.0 } else { slope });
                g * self.leaf(mask)
            }),
            Op::Tanh(a) => emit(a, &|| g * (y * y).scale(-1.0).add_scalar(1.0)),
            Op::Sigmoid(a) => emit(a, &|| g * y * y.scale(-1.0).add_scalar(1.0)),
            Op::Exp(a) => emit(a, &|| g * y),
            Op::Sqrt(a) => emit(a, &|| (g * y.recip()).scale(0.5)),
            Op::Ln(a) => emit(a, &|| g * v(a).recip()),
            Op::Recip(a) => emit(a, &|| (g * y * y).scale(-1.0)),
            Op::Square(a) => emit(a, &|| (g * v(a)).scale(2.0)),
            Op::GroupSoftmax(a, width) => emit(a, &|| y * (g - (g * y).group_sum(width))),
            Op::GroupSum(a, width) => emit(a, &|| g.group_sum(width)),
            Op::SumRows(a) => emit(a, &|| g.broadcast_rows(v(a).shape().0)),
            Op::SumCols(a) => emit(a, &|| g.broadcast_cols(v(a).shape().1)),
            Op::SumAll(a) => emit(a, &|| {
                let (r, c) = v(a).shape();
                g.fill(r, c)
            }),
            Op::BroadcastRows(a) => emit(a, &|| g.sum_rows()),
            Op::BroadcastCols(a) => emit(a, &|| g.sum_cols()),
            Op::Fill(a) => emit(a, &|| g.sum_all()),
            Op::SliceCols(a, start) => emit(a, &|| g.pad_cols(start, v(a).shape().1)),
            Op::PadCols(a, start) => emit(a, &|| g.slice_cols(start, start + v(a).shape().1)),
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let width = v(p).shape().1;
                    let start = offset;
                    emit(p, &|| g.slice_cols(start, start + width));
                    offset += width;
                }
            }
        }
        out
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Matrix> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.dim()
    }

    /// Value of a 1×1 variable.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.dim(), (1, 1), "item() on non-scalar {:?}", v.dim());
        v[[0, 0]]
    }

    /// Copy of the value with no history.
    pub fn detach(&self) -> Var<'t> {
        self.tape.leaf((*self.value()).clone())
    }

    fn unary(self, f: impl FnOnce(&Matrix) -> Matrix, op: Op) -> Var<'t> {
        let a = self.value();
        self.tape.push(f(&a), op)
    }

    fn binary(self, other: Var<'t>, f: impl FnOnce(&Matrix, &Matrix) -> Matrix, op: Op) -> Var<'t> {
        let a = self.value();
        let b = other.value();
        self.tape.push(f(&a, &b), op)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, |a, b| a.dot(b), Op::MatMul(self.id, other.id))
    }

    pub fn matmul_nt(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, |a, b| a.dot(&b.t()), Op::MatMulNT(self.id, other.id))
    }

    pub fn matmul_tn(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, |a, b| a.t().dot(b), Op::MatMulTN(self.id, other.id))
    }

    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        self.binary(
            row,
            |a, r| {
                assert_eq!(r.nrows(), 1, "add_row expects a 1×n row");
                a + r
            },
            Op::AddRow(self.id, row.id),
        )
    }

    pub fn mul_col(self, col: Var<'t>) -> Var<'t> {
        self.binary(
            col,
            |a, c| {
                assert_eq!(c.ncols(), 1, "mul_col expects an m×1 column");
                a * c
            },
            Op::MulCol(self.id, col.id),
        )
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        self.unary(|a| a * k, Op::Scale(self.id, k))
    }

    pub fn add_scalar(self, k: f64) -> Var<'t> {
        self.unary(|a| a + k, Op::AddScalar(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(|a| a.mapv(|x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(
            |a| a.mapv(|x| if x > 0.0 { x } else { slope * x }),
            Op::LeakyRelu(self.id, slope),
        )
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::tanh), Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(|a| a.mapv(sigmoid), Op::Sigmoid(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::exp), Op::Exp(self.id))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::sqrt), Op::Sqrt(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::ln), Op::Ln(self.id))
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::recip), Op::Recip(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|a| a.mapv(|x| x * x), Op::Square(self.id))
    }

    /// Row-wise softmax.
    pub fn softmax(self) -> Var<'t> {
        let width = self.shape().1;
        self.group_softmax(width)
    }

    /// Softmax over each run of `width` consecutive columns.
    pub fn group_softmax(self, width: usize) -> Var<'t> {
        self.unary(|a| softmax_groups(a, width), Op::GroupSoftmax(self.id, width))
    }

    /// Sums each run of `width` consecutive columns and writes the sum to
    /// every column of the run.
    pub fn group_sum(self, width: usize) -> Var<'t> {
        self.unary(|a| group_sum(a, width), Op::GroupSum(self.id, width))
    }

    /// Column sums as a 1×n row.
    pub fn sum_rows(self) -> Var<'t> {
        self.unary(|a| a.sum_axis(Axis(0)).insert_axis(Axis(0)), Op::SumRows(self.id))
    }

    /// Row sums as an m×1 column.
    pub fn sum_cols(self) -> Var<'t> {
        self.unary(|a| a.sum_axis(Axis(1)).insert_axis(Axis(1)), Op::SumCols(self.id))
    }

    pub fn sum_all(self) -> Var<'t> {
        self.unary(|a| Array2::from_elem((1, 1), a.sum()), Op::SumAll(self.id))
    }

    pub fn mean_all(self) -> Var<'t> {
        let (r, c) = self.shape();
        self.sum_all().scale(1.0 / (r * c) as f64)
    }

    /// Repeats a 1×n row `rows` times.
    pub fn broadcast_rows(self, rows: usize) -> Var<'t> {
        self.unary(
            |a| {
                assert_eq!(a.nrows(), 1, "broadcast_rows expects a 1×n row");
                a.broadcast((rows, a.ncols())).expect("broadcast").to_owned()
            },
            Op::BroadcastRows(self.id),
        )
    }

    /// Repeats an m×1 column `cols` times.
    pub fn broadcast_cols(self, cols: usize) -> Var<'t> {
        self.unary(
            |a| {
                assert_eq!(a.ncols(), 1, "broadcast_cols expects an m×1 column");
                a.broadcast((a.nrows(), cols)).expect("broadcast").to_owned()
            },
            Op::BroadcastCols(self.id),
        )
    }

    /// Expands a 1×1 value into a `rows × cols` matrix.
    pub fn fill(self, rows: usize, cols: usize) -> Var<'t> {
        self.unary(|a| Array2::from_elem((rows, cols), a[[0, 0]]), Op::Fill(self.id))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Var<'t> {
        self.unary(|a| a.slice(s![.., start..end]).to_owned(), Op::SliceCols(self.id, start))
    }

    /// Places `self` at column `start` of an otherwise-zero `m × total` matrix.
    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        self.unary(
            |a| {
                let mut out = Array2::zeros((a.nrows(), total));
                out.slice_mut(s![.., start..start + a.ncols()]).assign(a);
                out
            },
            Op::PadCols(self.id, start),
        )
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let tape = parts[0].tape;
        let values: Vec<Rc<Matrix>> = parts.iter().map(|p| p.value()).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let joined = concatenate(Axis(1), &views).expect("row counts must agree");
        tape.push(joined, Op::Concat(parts.iter().map(|p| p.id).collect()))
    }
}

impl<'t> ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, |a, b| a + b, Op::Add(self.id, rhs.id))
    }
}

impl<'t> ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, |a, b| a - b, Op::Sub(self.id, rhs.id))
    }
}

impl<'t> ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, |a, b| a * b, Op::Mul(self.id, rhs.id))
    }
}

impl<'t> ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(a: &Matrix) -> Matrix {
    softmax_groups(a, a.ncols())
}

/// Softmax within each run of `width` consecutive columns of every row.
pub fn softmax_groups(a: &Matrix, width: usize) -> Matrix {
    assert!(width > 0 && a.ncols().is_multiple_of(width), "{} columns not divisible into groups of {width}", a.ncols());
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        for mut group in row.exact_chunks_mut(width) {
            let max = group.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            group.mapv_inplace(|x| (x - max).exp());
            let total = group.sum();
            group.mapv_inplace(|x| x / total);
        }
    }
    out
}

fn group_sum(a: &Matrix, width: usize) -> Matrix {
    assert!(width > 0 && a.ncols().is_multiple_of(width), "{} columns not divisible into groups of {width}", a.ncols());
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        for mut group in row.exact_chunks_mut(width) {
            let total = group.sum();
            group.fill(total);
        }
    }
    out
}
