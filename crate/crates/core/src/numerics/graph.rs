//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends one node to the [`Graph`]; node order is
//! execution order, and [`Graph::gradients`] walks the tape in exact
//! reverse. Values are checked for finiteness as they are produced.

use super::{NumericsError, ParamId, ParameterStore, Real, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    GatherRows {
        table: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<T>,
        probs: Vec<T>,
    },
    Pick {
        x: Var,
        at: Vec<(usize, usize)>,
    },
    SegmentSum {
        x: Var,
        groups: Vec<usize>,
    },
    ColumnSums {
        x: Var,
        cols: Vec<usize>,
    },
    Mse {
        x: Var,
        target: Vec<T>,
    },
    Sum(Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Softmax(_) => "row_softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::GatherRows { .. } => "gather_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(_) => "concat_cols",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Pick { .. } => "pick",
            Op::SegmentSum { .. } => "segment_sum",
            Op::ColumnSums { .. } => "column_sums",
            Op::Mse { .. } => "mse",
            Op::Sum(_) => "sum",
        }
    }
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Epsilon added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Record of one forward pass.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    param_vars: Vec<(ParamId, Var)>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_vars: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var, NumericsError> {
        if !value.all_finite() {
            return Err(NumericsError::NonFinite { op: op.name() });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize), NumericsError> {
        match *self.value(v).shape() {
            [r, c] => Ok((r, c)),
            ref s => Err(NumericsError::Rank {
                op,
                expected: 2,
                shape: s.to_vec(),
            }),
        }
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            left: self.value(a).shape().to_vec(),
            right: self.value(b).shape().to_vec(),
        }
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var, NumericsError> {
        self.push(t, Op::Leaf, false)
    }

    /// Free input that collects a gradient (useful outside a parameter store).
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var, NumericsError> {
        self.push(t, Op::Leaf, true)
    }

    /// Brings a stored parameter onto the tape. Repeated calls for the same
    /// id return the same node.
    pub fn param(&mut self, store: &ParameterStore<T>, id: ParamId) -> Result<Var, NumericsError> {
        if let Some(&(_, v)) = self.param_vars.iter().find(|(p, _)| *p == id) {
            return Ok(v);
        }
        let p = store.get(id);
        let v = self.push(p.value().clone(), Op::Param, p.is_trainable())?;
        self.param_vars.push((id, v));
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            n as isize,
            1,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        let rg = self.rg(&[a, b]);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, k2) = self.dims2(b, "matmul_nt")?;
        if k != k2 {
            return Err(self.mismatch("matmul_nt", a, b));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            1,
            k as isize,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        let rg = self.rg(&[a, b]);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.mismatch("add", a, b));
        }
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(shape, data)?, Op::Add(a, b), rg)
    }

    /// Adds a vector of length `last_dim` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let d = self.value(x).last_dim();
        if self.value(bias).len() != d {
            return Err(self.mismatch("add_row", x, bias));
        }
        let b = self.value(bias).data();
        let data: Vec<T> = self
            .value(x)
            .data()
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(b).map(|(&u, &v)| u + v))
            .collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(&[x, bias]);
        self.push(Tensor::new(shape, data)?, Op::AddRow(x, bias), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.mismatch("mul", a, b));
        }
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(shape, data)?, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var, NumericsError> {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| v * c).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(&[x]);
        self.push(Tensor::new(shape, data)?, Op::Scale(x, c), rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumericsError> {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(&[x]);
        self.push(Tensor::new(shape, data)?, Op::Relu(x), rg)
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn row_softmax(&mut self, x: Var) -> Result<Var, NumericsError> {
        let t = self.value(x);
        if !t.all_finite() {
            return Err(NumericsError::NonFinite { op: "row_softmax" });
        }
        let d = t.last_dim();
        let mut data = t.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            softmax_in_place(row);
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(&[x]);
        self.push(Tensor::new(shape, data)?, Op::Softmax(x), rg)
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NumericsError> {
        let d = self.value(x).last_dim();
        if d < 2 {
            return Err(NumericsError::DegenerateNorm(d));
        }
        if self.value(gain).len() != d {
            return Err(self.mismatch("layer_norm", x, gain));
        }
        if self.value(bias).len() != d {
            return Err(self.mismatch("layer_norm", x, bias));
        }
        let eps = T::from_f64(LAYER_NORM_EPS);
        let inv_d = T::one() / T::from_f64(d as f64);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = self.value(x).rows();
        let mut out = Vec::with_capacity(rows * d);
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        for row in self.value(x).data().chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let rstd = T::one() / (var + eps).sqrt();
            out.extend(row.iter().enumerate().map(|(j, &v)| (v - mean) * rstd * g[j] + b[j]));
            means.push(mean);
            rstds.push(rstd);
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(&[x, gain, bias]);
        self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean: means,
                rstd: rstds,
            },
            rg,
        )
    }

    /// Selects rows of a matrix (embedding lookup, position selection).
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var, NumericsError> {
        let (n, d) = self.dims2(table, "gather_rows")?;
        if rows.is_empty() {
            return Err(NumericsError::BadShape(vec![0, d]));
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= n {
                return Err(NumericsError::OutOfBounds {
                    op: "gather_rows",
                    index: r,
                    bound: n,
                });
            }
            data.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let rg = self.rg(&[table]);
        self.push(
            Tensor::matrix(rows.len(), d, data)?,
            Op::GatherRows {
                table,
                rows: rows.to_vec(),
            },
            rg,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(x, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(NumericsError::OutOfBounds {
                op: "slice_cols",
                index: start + len,
                bound: n,
            });
        }
        let src = self.value(x).data();
        let data: Vec<T> = (0..m)
            .flat_map(|r| src[r * n + start..r * n + start + len].iter().copied())
            .collect();
        let rg = self.rg(&[x]);
        self.push(Tensor::matrix(m, len, data)?, Op::SliceCols { x, start }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or(NumericsError::BadShape(vec![0]))?;
        let (m, _) = self.dims2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_cols")?;
            if r != m {
                return Err(self.mismatch("concat_cols", first, p));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        self.push(Tensor::matrix(m, n, data)?, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Weighted cross-entropy from logits:
    /// `-Σ_i weights[i] · log softmax(logits_i)[targets[i]]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[T]) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != m || weights.len() != m {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                left: vec![m, n],
                right: vec![targets.len(), weights.len()],
            });
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = T::zero();
        for (i, row) in probs.chunks_exact_mut(n).enumerate() {
            let t = targets[i];
            if t >= n {
                return Err(NumericsError::OutOfBounds {
                    op: "cross_entropy",
                    index: t,
                    bound: n,
                });
            }
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            loss -= weights[i] * (row[t] - lse);
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let rg = self.rg(&[logits]);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// Gathers individual `(row, col)` entries into a vector.
    pub fn pick(&mut self, x: Var, at: &[(usize, usize)]) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(x, "pick")?;
        if at.is_empty() {
            return Err(NumericsError::BadShape(vec![0]));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(at.len());
        for &(r, c) in at {
            if r >= m || c >= n {
                return Err(NumericsError::OutOfBounds {
                    op: "pick",
                    index: r * n + c,
                    bound: m * n,
                });
            }
            data.push(src[r * n + c]);
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::vector(data)?, Op::Pick { x, at: at.to_vec() }, rg)
    }

    /// Sums entries of a vector into `n_groups` buckets.
    pub fn segment_sum(&mut self, x: Var, groups: &[usize], n_groups: usize) -> Result<Var, NumericsError> {
        let src = self.value(x).data();
        if groups.len() != src.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "segment_sum",
                left: vec![src.len()],
                right: vec![groups.len()],
            });
        }
        let mut data = vec![T::zero(); n_groups];
        for (&g, &v) in groups.iter().zip(src) {
            if g >= n_groups {
                return Err(NumericsError::OutOfBounds {
                    op: "segment_sum",
                    index: g,
                    bound: n_groups,
                });
            }
            data[g] += v;
        }
        let rg = self.rg(&[x]);
        self.push(
            Tensor::vector(data)?,
            Op::SegmentSum {
                x,
                groups: groups.to_vec(),
            },
            rg,
        )
    }

    /// Column sums of a matrix over the selected columns.
    pub fn column_sums(&mut self, x: Var, cols: &[usize]) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(x, "column_sums")?;
        if let Some(&c) = cols.iter().find(|&&c| c >= n) {
            return Err(NumericsError::OutOfBounds {
                op: "column_sums",
                index: c,
                bound: n,
            });
        }
        let src = self.value(x).data();
        let data = cols
            .iter()
            .map(|&c| (0..m).map(|r| src[r * n + c]).sum::<T>())
            .collect();
        let rg = self.rg(&[x]);
        self.push(
            Tensor::vector(data)?,
            Op::ColumnSums {
                x,
                cols: cols.to_vec(),
            },
            rg,
        )
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, x: Var, target: &[T]) -> Result<Var, NumericsError> {
        let src = self.value(x).data();
        if src.len() != target.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "mse",
                left: vec![src.len()],
                right: vec![target.len()],
            });
        }
        let n = T::from_f64(src.len() as f64);
        let loss = src.iter().zip(target).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / n;
        let rg = self.rg(&[x]);
        self.push(
            Tensor::scalar(loss),
            Op::Mse {
                x,
                target: target.to_vec(),
            },
            rg,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<T>, NumericsError> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(NumericsError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.backprop(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs the reverse sweep and accumulates parameter gradients into
    /// `store`. Parameters that the loss does not reach are marked as having
    /// an (exactly zero) gradient for this step.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore<T>) -> Result<(), NumericsError> {
        let grads = self.gradients(loss)?;
        for &(id, v) in &self.param_vars {
            if let Some(g) = grads.get(v) {
                store.accumulate_grad(id, g);
            }
        }
        store.mark_grads_ready();
        Ok(())
    }

    fn backprop(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| self.nodes[v.0].value.data();
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Param => {}
            &Op::MatMul(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].value);
                let n = node.value.last_dim();
                if wants(a) {
                    let da = slot(grads, a, m * k);
                    T::gemm(m, n, k, T::one(), g, n as isize, 1, val(b), 1, n as isize, T::one(), da, k as isize, 1);
                }
                if wants(b) {
                    let db = slot(grads, b, k * n);
                    T::gemm(k, m, n, T::one(), val(a), 1, k as isize, g, n as isize, 1, T::one(), db, n as isize, 1);
                }
            }
            &Op::MatMulNt(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].value);
                let n = node.value.last_dim();
                if wants(a) {
                    let da = slot(grads, a, m * k);
                    T::gemm(m, n, k, T::one(), g, n as isize, 1, val(b), k as isize, 1, T::one(), da, k as isize, 1);
                }
                if wants(b) {
                    let db = slot(grads, b, n * k);
                    T::gemm(n, m, k, T::one(), g, 1, n as isize, val(a), k as isize, 1, T::one(), db, k as isize, 1);
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            &Op::AddRow(x, bias) => {
                if wants(x) {
                    add_into(slot(grads, x, g.len()), g);
                }
                if wants(bias) {
                    let d = node.value.last_dim();
                    let db = slot(grads, bias, d);
                    for row in g.chunks_exact(d) {
                        add_into(db, row);
                    }
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    let other = val(b);
                    let da = slot(grads, a, g.len());
                    for i in 0..g.len() {
                        da[i] += g[i] * other[i];
                    }
                }
                if wants(b) {
                    let other = val(a);
                    let db = slot(grads, b, g.len());
                    for i in 0..g.len() {
                        db[i] += g[i] * other[i];
                    }
                }
            }
            &Op::Scale(x, c) => {
                let dx = slot(grads, x, g.len());
                for (d, &gi) in dx.iter_mut().zip(g) {
                    *d += gi * c;
                }
            }
            &Op::Relu(x) => {
                let out = node.value.data();
                let dx = slot(grads, x, g.len());
                for i in 0..g.len() {
                    if out[i] > T::zero() {
                        dx[i] += g[i];
                    }
                }
            }
            &Op::Softmax(x) => {
                let d = node.value.last_dim();
                let y = node.value.data();
                let dx = slot(grads, x, g.len());
                for ((gr, yr), dr) in g.chunks_exact(d).zip(y.chunks_exact(d)).zip(dx.chunks_exact_mut(d)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for j in 0..d {
                        dr[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            } => {
                let d = node.value.last_dim();
                let xs = val(*x);
                let gn = val(*gain);
                let inv_d = T::one() / T::from_f64(d as f64);
                let mut dgain = vec![T::zero(); d];
                let mut dbias = vec![T::zero(); d];
                let mut dx_all = vec![T::zero(); g.len()];
                let mut xhat = vec![T::zero(); d];
                let mut dxhat = vec![T::zero(); d];
                for (r, (gr, xr)) in g.chunks_exact(d).zip(xs.chunks_exact(d)).enumerate() {
                    for j in 0..d {
                        xhat[j] = (xr[j] - mean[r]) * rstd[r];
                        dxhat[j] = gr[j] * gn[j];
                        dgain[j] += gr[j] * xhat[j];
                        dbias[j] += gr[j];
                    }
                    let m1 = dxhat.iter().copied().sum::<T>() * inv_d;
                    let m2 = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() * inv_d;
                    let dr = &mut dx_all[r * d..(r + 1) * d];
                    for j in 0..d {
                        dr[j] = rstd[r] * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                if wants(*x) {
                    add_into(slot(grads, *x, g.len()), &dx_all);
                }
                if wants(*gain) {
                    add_into(slot(grads, *gain, d), &dgain);
                }
                if wants(*bias) {
                    add_into(slot(grads, *bias, d), &dbias);
                }
            }
            Op::GatherRows { table, rows } => {
                let d = node.value.last_dim();
                let len = self.nodes[table.0].value.len();
                let dt = slot(grads, *table, len);
                for (i, &r) in rows.iter().enumerate() {
                    add_into(&mut dt[r * d..(r + 1) * d], &g[i * d..(i + 1) * d]);
                }
            }
            &Op::SliceCols { x, start } => {
                let (m, n) = dims(&self.nodes[x.0].value);
                let w = node.value.last_dim();
                let dx = slot(grads, x, m * n);
                for r in 0..m {
                    add_into(&mut dx[r * n + start..r * n + start + w], &g[r * w..(r + 1) * w]);
                }
            }
            Op::ConcatCols(parts) => {
                let n = node.value.last_dim();
                let m = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.last_dim();
                    if wants(p) {
                        let dp = slot(grads, p, m * w);
                        for r in 0..m {
                            add_into(&mut dp[r * w..(r + 1) * w], &g[r * n + offset..r * n + offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let n = self.nodes[logits.0].value.last_dim();
                let dl = slot(grads, *logits, probs.len());
                for (i, (pr, dr)) in probs.chunks_exact(n).zip(dl.chunks_exact_mut(n)).enumerate() {
                    let s = g[0] * weights[i];
                    for j in 0..n {
                        dr[j] += s * pr[j];
                    }
                    dr[targets[i]] -= s;
                }
            }
            Op::Pick { x, at } => {
                let (m, n) = dims(&self.nodes[x.0].value);
                let dx = slot(grads, *x, m * n);
                for (k, &(r, c)) in at.iter().enumerate() {
                    dx[r * n + c] += g[k];
                }
            }
            Op::SegmentSum { x, groups } => {
                let dx = slot(grads, *x, groups.len());
                for (k, &grp) in groups.iter().enumerate() {
                    dx[k] += g[grp];
                }
            }
            Op::ColumnSums { x, cols } => {
                let (m, n) = dims(&self.nodes[x.0].value);
                let dx = slot(grads, *x, m * n);
                for r in 0..m {
                    for (k, &c) in cols.iter().enumerate() {
                        dx[r * n + c] += g[k];
                    }
                }
            }
            Op::Mse { x, target } => {
                let xs = val(*x);
                let scale = g[0] * T::from_f64(2.0) / T::from_f64(xs.len() as f64);
                let dx = slot(grads, *x, xs.len());
                for i in 0..xs.len() {
                    dx[i] += scale * (xs[i] - target[i]);
                }
            }
            &Op::Sum(x) => {
                let len = self.nodes[x.0].value.len();
                for d in slot(grads, x, len).iter_mut() {
                    *d += g[0];
                }
            }
        }
    }
}

/// Gradients of one reverse sweep, indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Like [`get`](Self::get) but zero-filled for unreachable nodes.
    pub fn wrt(&self, graph: &Graph<T>, v: Var) -> Vec<T> {
        self.get(v)
            .map(<[T]>::to_vec)
            .unwrap_or_else(|| vec![T::zero(); graph.value(v).len()])
    }
}

fn dims<T: Real>(t: &Tensor<T>) -> (usize, usize) {
    (t.rows(), t.last_dim())
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn zip_map<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}
