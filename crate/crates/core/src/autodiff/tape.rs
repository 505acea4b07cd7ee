use std::sync::Arc;

use rand::Rng;

use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type ElementwiseFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    ScaleRows(Var, Arc<[f64]>),
    Scale(Var, f64),
    AddScalar(Var),
    Concat(Vec<Var>),
    SliceCols { input: Var, start: usize },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Sqrt(Var),
    Map { input: Var, deriv: ElementwiseFn },
    Softmax(Var),
    Gather { input: Var, index: Arc<[usize]> },
    SegmentSum { input: Var, segments: Arc<[usize]> },
    SegmentMax { input: Var, argmax: Vec<Option<usize>> },
    Dropout { input: Var, mask: Vec<f64> },
    Sum(Var),
    Mean(Var),
    RowSum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Append-only record of a forward computation.
///
/// Every operator evaluates eagerly and stores what its backward rule needs.
/// Nodes are appended in evaluation order, so the recording order is already a
/// topological order and [`Tape::backward`] simply walks it in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` when `var` is
    /// untracked or does not influence the loss.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0)?.as_deref()
    }

    /// Like [`Gradients::get`] but materializes zeros for untouched tensors.
    pub fn get_or_zeros(&self, var: Var) -> Tensor {
        let shape = &self.shapes[var.0];
        match self.get(var) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

/// Computes `c = beta * c + op(a) * op(b)` for row-major operands.
///
/// `a` is `[m, k]` (or `[k, m]` when `a_t`), `b` is `[k, n]` (or `[n, k]` when `b_t`).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    /// Records a trainable input; gradients flow into it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn is_tracked(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    fn mismatch(&self, op: &'static str, vars: &[Var]) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            op,
            shapes: vars.iter().map(|v| self.shape(*v).to_vec()).collect(),
        }
    }

    fn matrix_dims(&self, op: &'static str, var: Var) -> Result<(usize, usize), AutodiffError> {
        match *self.shape(var) {
            [r, c] => Ok((r, c)),
            _ => Err(self.mismatch(op, &[var])),
        }
    }

    fn unary(&mut self, input: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = &self.nodes[input.0].value;
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let tracked = self.tracked_any(&[input]);
        self.push(value, op, tracked)
    }

    fn binary_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(name, &[a, b]));
        }
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(va.shape(), data).expect("same shape");
        let tracked = self.tracked_any(&[a, b]);
        Ok(self.push(value, op, tracked))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(self.mismatch("matmul", &[a, b]));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            0.0,
        );
        let tracked = self.tracked_any(&[a, b]);
        Ok(self.push(
            Tensor::matrix(m, n, out).expect("matmul shape"),
            Op::MatMul(a, b),
            tracked,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`cols` bias to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, AutodiffError> {
        let cols = self.value(a).cols();
        if self.shape(bias) != [cols] {
            return Err(self.mismatch("add_row", &[a, bias]));
        }
        let b = self.value(bias).data().to_vec();
        let src = self.value(a);
        let mut data = src.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            row.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        }
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let tracked = self.tracked_any(&[a, bias]);
        Ok(self.push(value, Op::AddRow(a, bias), tracked))
    }

    /// Scales row `i` of `a` by `col[i]`; `col` is `[rows]` or `[rows, 1]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, AutodiffError> {
        let rows = self.value(a).rows();
        let ok = matches!(*self.shape(col), [r] if r == rows)
            || matches!(*self.shape(col), [r, 1] if r == rows);
        if !ok {
            return Err(self.mismatch("mul_col", &[a, col]));
        }
        let scale = self.value(col).data().to_vec();
        let src = self.value(a);
        let cols = src.cols();
        let mut data = src.data().to_vec();
        for (row, s) in data.chunks_mut(cols.max(1)).zip(&scale) {
            row.iter_mut().for_each(|x| *x *= s);
        }
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let tracked = self.tracked_any(&[a, col]);
        Ok(self.push(value, Op::MulCol(a, col), tracked))
    }

    /// Scales row `i` of `a` by the constant `weights[i]`.
    pub fn scale_rows(&mut self, a: Var, weights: &Arc<[f64]>) -> Result<Var, AutodiffError> {
        let src = self.value(a);
        if src.rows() != weights.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "scale_rows",
                shapes: vec![src.shape().to_vec(), vec![weights.len()]],
            });
        }
        let cols = src.cols();
        let mut data = src.data().to_vec();
        for (row, s) in data.chunks_mut(cols.max(1)).zip(weights.iter()) {
            row.iter_mut().for_each(|x| *x *= s);
        }
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let tracked = self.tracked_any(&[a]);
        Ok(self.push(value, Op::ScaleRows(a, Arc::clone(weights)), tracked))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    /// Concatenates along the last dimension; all inputs share their row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let Some(&first) = parts.first() else {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat",
                shapes: Vec::new(),
            });
        };
        let lead = self.shape(first)[..self.shape(first).len().saturating_sub(1)].to_vec();
        if self.shape(first).is_empty()
            || parts
                .iter()
                .any(|p| self.shape(*p).len() != lead.len() + 1 || self.shape(*p)[..lead.len()] != lead[..])
        {
            return Err(self.mismatch("concat", parts));
        }
        let rows = self.value(first).rows();
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        let tracked = self.tracked_any(parts);
        Ok(self.push(
            Tensor::new(&shape, data).expect("concat shape"),
            Op::Concat(parts.to_vec()),
            tracked,
        ))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let src = self.value(a);
        let cols = src.cols();
        if src.shape().is_empty() || start + len > cols {
            return Err(self.mismatch("slice_cols", &[a]));
        }
        let mut data = Vec::with_capacity(src.rows() * len);
        for r in 0..src.rows() {
            data.extend_from_slice(&src.row(r)[start..start + len]);
        }
        let mut shape = src.shape().to_vec();
        *shape.last_mut().expect("non-scalar") = len;
        let tracked = self.tracked_any(&[a]);
        Ok(self.push(
            Tensor::new(&shape, data).expect("slice shape"),
            Op::SliceCols { input: a, start },
            tracked,
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    /// Applies `f` elementwise with a caller-supplied derivative `df`.
    pub fn map(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Var {
        self.unary(
            a,
            f,
            Op::Map {
                input: a,
                deriv: Arc::new(df),
            },
        )
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let cols = src.cols().max(1);
        let mut data = src.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let tracked = self.tracked_any(&[a]);
        self.push(value, Op::Softmax(a), tracked)
    }

    /// Output row `i` is input row `index[i]`.
    pub fn gather_rows(&mut self, a: Var, index: &Arc<[usize]>) -> Result<Var, AutodiffError> {
        let src = self.value(a);
        if src.shape().len() != 2 || index.iter().any(|&i| i >= src.rows()) {
            return Err(AutodiffError::ShapeMismatch {
                op: "gather_rows",
                shapes: vec![src.shape().to_vec(), vec![index.len()]],
            });
        }
        let cols = src.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(src.row(i));
        }
        let tracked = self.tracked_any(&[a]);
        Ok(self.push(
            Tensor::matrix(index.len(), cols, data).expect("gather shape"),
            Op::Gather {
                input: a,
                index: Arc::clone(index),
            },
            tracked,
        ))
    }

    fn check_segments(
        &self,
        op: &'static str,
        a: Var,
        segments: &[usize],
        count: usize,
    ) -> Result<usize, AutodiffError> {
        let src = self.value(a);
        if src.shape().len() != 2 || src.rows() != segments.len() {
            return Err(AutodiffError::ShapeMismatch {
                op,
                shapes: vec![src.shape().to_vec(), vec![segments.len()]],
            });
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= count) {
            return Err(AutodiffError::SegmentOutOfRange {
                op,
                segment: bad,
                count,
            });
        }
        Ok(src.cols())
    }

    /// Sums rows sharing a segment id into `count` output rows.
    pub fn segment_sum(
        &mut self,
        a: Var,
        segments: &Arc<[usize]>,
        count: usize,
    ) -> Result<Var, AutodiffError> {
        let cols = self.check_segments("segment_sum", a, segments, count)?;
        let src = self.value(a);
        let mut data = vec![0.0; count * cols];
        for (r, &s) in segments.iter().enumerate() {
            let out = &mut data[s * cols..(s + 1) * cols];
            out.iter_mut().zip(src.row(r)).for_each(|(o, x)| *o += x);
        }
        let tracked = self.tracked_any(&[a]);
        Ok(self.push(
            Tensor::matrix(count, cols, data).expect("segment shape"),
            Op::SegmentSum {
                input: a,
                segments: Arc::clone(segments),
            },
            tracked,
        ))
    }

    /// Elementwise max over rows sharing a segment id. Empty segments yield
    /// zeros; ties route the gradient to the lowest row index.
    pub fn segment_max(
        &mut self,
        a: Var,
        segments: &Arc<[usize]>,
        count: usize,
    ) -> Result<Var, AutodiffError> {
        let cols = self.check_segments("segment_max", a, segments, count)?;
        let src = self.value(a);
        let mut argmax: Vec<Option<usize>> = vec![None; count * cols];
        for (r, &s) in segments.iter().enumerate() {
            let row = src.row(r);
            for c in 0..cols {
                let slot = &mut argmax[s * cols + c];
                match *slot {
                    Some(best) if src.data()[best * cols + c] >= row[c] => {}
                    _ => *slot = Some(r),
                }
            }
        }
        let data = argmax
            .iter()
            .enumerate()
            .map(|(i, am)| am.map_or(0.0, |r| src.data()[r * cols + i % cols]))
            .collect();
        let tracked = self.tracked_any(&[a]);
        Ok(self.push(
            Tensor::matrix(count, cols, data).expect("segment shape"),
            Op::SegmentMax { input: a, argmax },
            tracked,
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var, AutodiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::InvalidProbability(p));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.value(a).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let src = self.value(a);
        let data = src.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let tracked = self.tracked_any(&[a]);
        Ok(self.push(value, Op::Dropout { input: a, mask }, tracked))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        let tracked = self.tracked_any(&[a]);
        self.push(Tensor::scalar(total), Op::Sum(a), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mean = src.data().iter().sum::<f64>() / src.numel().max(1) as f64;
        let tracked = self.tracked_any(&[a]);
        self.push(Tensor::scalar(mean), Op::Mean(a), tracked)
    }

    /// Sums each row, giving `[rows, 1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let cols = src.cols().max(1);
        let data: Vec<f64> = src.data().chunks(cols).map(|r| r.iter().sum()).collect();
        let rows = data.len();
        let tracked = self.tracked_any(&[a]);
        self.push(
            Tensor::matrix(rows, 1, data).expect("row sum shape"),
            Op::RowSum(a),
            tracked,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(root.value.shape().to_vec()));
        }
        if !root.tracked {
            return Err(AutodiffError::UntrackedLoss);
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], var: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[var.0].tracked {
            return;
        }
        let n = self.nodes[var.0].value.numel();
        let slot = grads[var.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[1];
                let bv = self.value(*b).data();
                self.accumulate(grads, *a, |ga| gemm(m, n, k, g, false, bv, true, ga, 1.0));
                let av = self.value(*a).data();
                self.accumulate(grads, *b, |gb| gemm(k, m, n, av, true, g, false, gb, 1.0));
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    self.accumulate(grads, *v, |ga| {
                        ga.iter_mut().zip(g).for_each(|(x, y)| *x += y)
                    });
                }
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                self.accumulate(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for ((x, y), w) in ga.iter_mut().zip(g).zip(bv) {
                        *x += y * w;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((x, y), w) in gb.iter_mut().zip(g).zip(av) {
                        *x += y * w;
                    }
                });
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let cols = out.cols().max(1);
                self.accumulate(grads, *bias, |gb| {
                    for row in g.chunks(cols) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::MulCol(a, col) => {
                let cols = out.cols().max(1);
                let scale = self.value(*col).data();
                self.accumulate(grads, *a, |ga| {
                    for ((gr, orow), s) in ga.chunks_mut(cols).zip(g.chunks(cols)).zip(scale) {
                        gr.iter_mut().zip(orow).for_each(|(x, y)| *x += y * s);
                    }
                });
                let av = self.value(*a).data();
                self.accumulate(grads, *col, |gc| {
                    for ((x, grow), arow) in gc.iter_mut().zip(g.chunks(cols)).zip(av.chunks(cols)) {
                        *x += grow.iter().zip(arow).map(|(p, q)| p * q).sum::<f64>();
                    }
                });
            }
            Op::ScaleRows(a, w) => {
                let cols = out.cols().max(1);
                self.accumulate(grads, *a, |ga| {
                    for ((gr, orow), s) in ga.chunks_mut(cols).zip(g.chunks(cols)).zip(w.iter()) {
                        gr.iter_mut().zip(orow).for_each(|(x, y)| *x += y * s);
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y * s));
            }
            Op::AddScalar(a) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Concat(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    self.accumulate(grads, *p, |gp| {
                        for (r, dst) in gp.chunks_mut(w.max(1)).enumerate() {
                            let src = &g[r * total + offset..r * total + offset + w];
                            dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols { input, start } => {
                let w = out.cols();
                let cols = self.value(*input).cols();
                self.accumulate(grads, *input, |gi| {
                    for (r, src) in g.chunks(w.max(1)).enumerate() {
                        let dst = &mut gi[r * cols + start..r * cols + start + w];
                        dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for ((x, y), v) in ga.iter_mut().zip(g).zip(av) {
                        if *v > 0.0 {
                            *x += y;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, |ga| {
                    for ((x, y), s) in ga.iter_mut().zip(g).zip(out.data()) {
                        *x += y * s * (1.0 - s);
                    }
                });
            }
            Op::Tanh(a) => {
                self.accumulate(grads, *a, |ga| {
                    for ((x, y), t) in ga.iter_mut().zip(g).zip(out.data()) {
                        *x += y * (1.0 - t * t);
                    }
                });
            }
            Op::Sqrt(a) => {
                self.accumulate(grads, *a, |ga| {
                    for ((x, y), r) in ga.iter_mut().zip(g).zip(out.data()) {
                        *x += y * 0.5 / r;
                    }
                });
            }
            Op::Map { input, deriv } => {
                let iv = self.value(*input).data();
                self.accumulate(grads, *input, |gi| {
                    for ((x, y), v) in gi.iter_mut().zip(g).zip(iv) {
                        *x += y * deriv(*v);
                    }
                });
            }
            Op::Softmax(a) => {
                let cols = out.cols().max(1);
                self.accumulate(grads, *a, |ga| {
                    for ((gr, orow), srow) in ga.chunks_mut(cols).zip(g.chunks(cols)).zip(out.data().chunks(cols)) {
                        let dot: f64 = orow.iter().zip(srow).map(|(p, q)| p * q).sum();
                        for ((x, y), s) in gr.iter_mut().zip(orow).zip(srow) {
                            *x += s * (y - dot);
                        }
                    }
                });
            }
            Op::Gather { input, index } => {
                let cols = out.cols();
                self.accumulate(grads, *input, |gi| {
                    for (r, &src) in index.iter().enumerate() {
                        let dst = &mut gi[src * cols..(src + 1) * cols];
                        dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::SegmentSum { input, segments } => {
                let cols = out.cols();
                self.accumulate(grads, *input, |gi| {
                    for (r, &s) in segments.iter().enumerate() {
                        let dst = &mut gi[r * cols..(r + 1) * cols];
                        dst.iter_mut().zip(&g[s * cols..(s + 1) * cols]).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::SegmentMax { input, argmax } => {
                let cols = out.cols();
                self.accumulate(grads, *input, |gi| {
                    for (i, am) in argmax.iter().enumerate() {
                        if let Some(r) = am {
                            gi[r * cols + i % cols] += g[i];
                        }
                    }
                });
            }
            Op::Dropout { input, mask } => {
                self.accumulate(grads, *input, |gi| {
                    for ((x, y), m) in gi.iter_mut().zip(g).zip(mask) {
                        *x += y * m;
                    }
                });
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel().max(1) as f64;
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::RowSum(a) => {
                let cols = self.value(*a).cols().max(1);
                self.accumulate(grads, *a, |ga| {
                    for (row, y) in ga.chunks_mut(cols).zip(g) {
                        row.iter_mut().for_each(|x| *x += y);
                    }
                });
            }
        }
    }
}
