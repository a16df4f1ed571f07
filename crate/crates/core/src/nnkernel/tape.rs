//! Reverse-mode tape over dense matrices.
//!
//! Every kernel appends one node holding its output and whatever it needs for
//! the backward pass. `backward` walks the nodes in exact reverse order. Each
//! kernel also adds its forward FLOPs to a running tally (see [`super::flops`]).

use std::borrow::Cow;

use super::flops;
use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensorio::{matmul_acc, matmul_at_acc, matmul_bt_acc, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix<S>,
        rstd: Vec<S>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        probs: Matrix<S>,
        scale: S,
    },
    LstmCell {
        gates_x: Var,
        state: Var,
        w_hh: Var,
        /// Activated gates `[i, f, g, o]`.
        acts: Vec<S>,
        tanh_c: Vec<S>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<S>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    /// Mean over the rows marked valid; output `1 x d`.
    MeanRows {
        x: Var,
        weights: Vec<S>,
    },
    /// Non-overlapping window means; `windows[i]` lists `(row, weight)`.
    WindowMean {
        x: Var,
        windows: Vec<Vec<(usize, S)>>,
    },
    Sum(Var),
}

struct Node<'p, S: Scalar> {
    value: Cow<'p, Matrix<S>>,
    op: Op<S>,
    needs_grad: bool,
}

/// Records kernel applications against a borrowed [`ParamStore`].
pub struct Tape<'p, S: Scalar> {
    params: &'p ParamStore<S>,
    nodes: Vec<Node<'p, S>>,
    flops: u64,
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p ParamStore<S>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            flops: 0,
        }
    }

    pub fn params(&self) -> &'p ParamStore<S> {
        self.params
    }

    /// Forward FLOPs recorded so far.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Matrix<S>, op: Op<S>, inputs: &[Var], flops: u64) -> Var {
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        self.push_node(Cow::Owned(value), op, needs_grad, flops)
    }

    fn push_node(&mut self, value: Cow<'p, Matrix<S>>, op: Op<S>, needs_grad: bool, flops: u64) -> Var {
        self.flops += flops;
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, m: Matrix<S>) -> Var {
        self.push_node(Cow::Owned(m), Op::Constant, false, 0)
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let params = self.params;
        let index = params
            .index_of(name)
            .ok_or_else(|| Error::MissingParam(name.to_owned()))?;
        Ok(self.push_node(Cow::Borrowed(&params.entry(index).value), Op::Param(index), true, 0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(Error::shape("matmul", format!("{n}x{k} * {k2}x{m}")));
        }
        let mut out = Matrix::zeros(n, m);
        matmul_acc(self.value(a), self.value(b), &mut out);
        Ok(self.push(
            out,
            Op::MatMul(a, b),
            &[a, b],
            flops::matmul(n as u64, k as u64, m as u64),
        ))
    }

    /// `y = x W + b` with `b` a `1 x d_out` row broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, d_in) = self.shape(x);
        let (w_in, d_out) = self.shape(w);
        if d_in != w_in {
            return Err(Error::shape("linear", format!("x {n}x{d_in}, W {w_in}x{d_out}")));
        }
        let mut out = Matrix::zeros(n, d_out);
        if let Some(b) = b {
            if self.shape(b) != (1, d_out) {
                return Err(Error::shape(
                    "linear",
                    format!("bias {:?}, expected 1x{d_out}", self.shape(b)),
                ));
            }
            let bias = self.value(b).as_slice();
            for i in 0..n {
                out.row_mut(i).copy_from_slice(bias);
            }
        }
        matmul_acc(self.value(x), self.value(w), &mut out);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let f = flops::linear(n as u64, d_in as u64, d_out as u64, b.is_some());
        Ok(self.push(out, Op::Linear { x, w, b }, &inputs, f))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.as_slice().iter().zip(vb.as_slice()).map(|(&x, &y)| x + y).collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data)?;
        let f = out.len() as u64;
        Ok(self.push(out, Op::Add(a, b), &[a, b], f))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.as_slice().iter().zip(vb.as_slice()).map(|(&x, &y)| x * y).collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data)?;
        let f = out.len() as u64;
        Ok(self.push(out, Op::Mul(a, b), &[a, b], f))
    }

    pub fn scale(&mut self, a: Var, k: S) -> Var {
        let out = self.value(a).map(|v| v * k);
        let f = out.len() as u64;
        self.push(out, Op::Scale(a, k), &[a], f)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(S::tanh);
        let f = out.len() as u64;
        self.push(out, Op::Tanh(a), &[a], f)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let f = out.len() as u64;
        self.push(out, Op::Sigmoid(a), &[a], f)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(S::zero()));
        self.push(out, Op::Relu(a), &[a], 0)
    }

    /// Row-wise softmax; `mask[j] == false` excludes column `j`.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (n, m) = self.shape(a);
        if let Some(mask) = mask {
            if mask.len() != m {
                return Err(Error::shape(
                    "softmax",
                    format!("mask of {} for {m} columns", mask.len()),
                ));
            }
        }
        let mut out = Matrix::zeros(n, m);
        for i in 0..n {
            let row = self.value(a).row(i);
            softmax_into(row, |j| mask.is_none_or(|mk| mk[j]), out.row_mut(i))
                .map_err(|_| Error::AllMasked { row: i })?;
        }
        Ok(self.push(out, Op::Softmax(a), &[a], flops::softmax((n * m) as u64)))
    }

    /// Per-row standardization (epsilon `1e-5`) followed by `gain * x + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (n, d) = self.shape(x);
        if self.shape(gain) != (1, d) || self.shape(bias) != (1, d) {
            return Err(Error::shape("layer_norm", format!("gain/bias must be 1x{d}")));
        }
        let eps = c::<S>(1e-5);
        let dn = S::of_usize(d);
        let mut xhat = Matrix::zeros(n, d);
        let mut rstd = Vec::with_capacity(n);
        let mut out = Matrix::zeros(n, d);
        let (g, b) = (self.value(gain).as_slice(), self.value(bias).as_slice());
        for i in 0..n {
            let row = self.value(x).row(i);
            let mean = row.iter().copied().sum::<S>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / dn;
            let r = S::one() / (var + eps).sqrt();
            rstd.push(r);
            for j in 0..d {
                let h = (row[j] - mean) * r;
                xhat.set(i, j, h);
                out.set(i, j, h * g[j] + b[j]);
            }
        }
        let f = flops::layer_norm(n as u64, d as u64);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
            f,
        ))
    }

    /// `softmax(Q K^T / sqrt(d_k) + mask) V`. `mask` is `n_q x n_k` row-major,
    /// `true` = attend. A query with every key masked is an error.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (n_q, d_k) = self.shape(q);
        let (n_k, d_k2) = self.shape(k);
        let (n_v, d_v) = self.shape(v);
        if d_k != d_k2 || n_k != n_v {
            return Err(Error::shape(
                "attention",
                format!("Q {n_q}x{d_k}, K {n_k}x{d_k2}, V {n_v}x{d_v}"),
            ));
        }
        if let Some(mask) = mask {
            if mask.len() != n_q * n_k {
                return Err(Error::shape("attention", format!("mask has {} entries", mask.len())));
            }
        }
        let scale = S::one() / S::of_usize(d_k).sqrt();
        let mut scores = Matrix::zeros(n_q, n_k);
        matmul_bt_acc(self.value(q), self.value(k), &mut scores);
        let mut probs = Matrix::zeros(n_q, n_k);
        for i in 0..n_q {
            let row: Vec<S> = scores.row(i).iter().map(|&s| s * scale).collect();
            softmax_into(&row, |j| mask.is_none_or(|mk| mk[i * n_k + j]), probs.row_mut(i))
                .map_err(|_| Error::AllMasked { row: i })?;
        }
        let mut out = Matrix::zeros(n_q, d_v);
        matmul_acc(&probs, self.value(v), &mut out);
        let f = flops::attention(n_q as u64, n_k as u64, d_k as u64, d_v as u64);
        Ok(self.push(out, Op::Attention { q, k, v, probs, scale }, &[q, k, v], f))
    }

    /// One LSTM step from precomputed input gates `x W_ih + b` (`1 x 4h`,
    /// gate order i, f, g, o) and the packed previous state `[h, c]` (`1 x 2h`).
    /// Returns the packed new state.
    pub fn lstm_cell(&mut self, gates_x: Var, state: Var, w_hh: Var) -> Result<Var> {
        let (_, two_h) = self.shape(state);
        let h = two_h / 2;
        if self.shape(state) != (1, 2 * h) || self.shape(gates_x) != (1, 4 * h) || self.shape(w_hh) != (h, 4 * h) {
            return Err(Error::shape(
                "lstm_cell",
                format!(
                    "gates {:?}, state {:?}, W_hh {:?}",
                    self.shape(gates_x),
                    self.shape(state),
                    self.shape(w_hh)
                ),
            ));
        }
        let s = self.value(state).as_slice();
        let mut z = self.value(gates_x).as_slice().to_vec();
        let w = self.value(w_hh);
        for (k, &hk) in s[..h].iter().enumerate() {
            if hk == S::zero() {
                continue;
            }
            for (zj, &wj) in z.iter_mut().zip(w.row(k)) {
                *zj += hk * wj;
            }
        }
        let mut acts = z;
        for (j, a) in acts.iter_mut().enumerate() {
            *a = if (2 * h..3 * h).contains(&j) {
                a.tanh()
            } else {
                sigmoid(*a)
            };
        }
        let mut out = vec![S::zero(); 2 * h];
        let mut tanh_c = Vec::with_capacity(h);
        for j in 0..h {
            let (i_g, f_g, g_g, o_g) = (acts[j], acts[h + j], acts[2 * h + j], acts[3 * h + j]);
            let cell = f_g * s[h + j] + i_g * g_g;
            let tc = cell.tanh();
            tanh_c.push(tc);
            out[j] = o_g * tc;
            out[h + j] = cell;
        }
        let f = flops::lstm_step(h as u64);
        Ok(self.push(
            Matrix::row_vector(out),
            Op::LstmCell {
                gates_x,
                state,
                w_hh,
                acts,
                tanh_c,
            },
            &[gates_x, state, w_hh],
            f,
        ))
    }

    /// Gathers rows of `table` (`V x d`).
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, d) = self.shape(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::IdOutOfRange { id, size: vocab });
            }
            data.extend_from_slice(self.value(table).row(id));
        }
        let out = Matrix::from_vec(ids.len(), d, data)?;
        Ok(self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
            0,
        ))
    }

    /// `-log softmax(logits)[label]` for a `1 x C` row.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let (rows, classes) = self.shape(logits);
        if rows != 1 {
            return Err(Error::shape(
                "cross_entropy",
                format!("logits must be 1xC, got {rows}x{classes}"),
            ));
        }
        if label >= classes {
            return Err(Error::IdOutOfRange {
                id: label,
                size: classes,
            });
        }
        let z = self.value(logits).as_slice();
        let mut probs = vec![S::zero(); classes];
        softmax_into(z, |_| true, &mut probs).expect("unmasked softmax");
        let max = z.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
        let loss = lse - z[label];
        // Loss reductions are training-only and stay out of the forward tally.
        Ok(self.push(
            Matrix::row_vector(vec![loss]),
            Op::CrossEntropy { logits, label, probs },
            &[logits],
            0,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, _) = self.shape(x);
        if start + len > n {
            return Err(Error::shape("slice_rows", format!("{start}+{len} > {n}")));
        }
        let out = self.value(x).slice_rows(start, len);
        Ok(self.push(out, Op::SliceRows { x, start }, &[x], 0))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = self.shape(x);
        if start + len > m {
            return Err(Error::shape("slice_cols", format!("{start}+{len} > {m}")));
        }
        let v = self.value(x);
        let out = Matrix::from_fn(n, len, |i, j| v.get(i, start + j));
        Ok(self.push(out, Op::SliceCols { x, start }, &[x], 0))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map(|&p| self.shape(p).1).unwrap_or(0);
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::shape("concat_rows", "column counts differ"));
            }
            rows += v.rows();
            data.extend_from_slice(v.as_slice());
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts, 0))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|&p| self.shape(p).0).unwrap_or(0);
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(i);
                out.row_mut(i)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts, 0))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x), &[x], 0)
    }

    /// Mean over rows with `mask[r] == true` (all rows when `None`); `1 x d`.
    pub fn mean_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (n, d) = self.shape(x);
        let valid: Vec<bool> = match mask {
            Some(m) if m.len() != n => {
                return Err(Error::shape("mean_rows", format!("mask of {} for {n} rows", m.len())))
            }
            Some(m) => m.to_vec(),
            None => vec![true; n],
        };
        let count = valid.iter().filter(|&&v| v).count();
        if count == 0 {
            return Err(Error::AllMasked { row: 0 });
        }
        let w = S::one() / S::of_usize(count);
        let weights: Vec<S> = valid.iter().map(|&v| if v { w } else { S::zero() }).collect();
        let mut out = vec![S::zero(); d];
        for (r, &keep) in valid.iter().enumerate() {
            if keep {
                for (o, &v) in out.iter_mut().zip(self.value(x).row(r)) {
                    *o += v;
                }
            }
        }
        out.iter_mut().for_each(|o| *o *= w);
        let f = (count * d) as u64;
        Ok(self.push(Matrix::row_vector(out), Op::MeanRows { x, weights }, &[x], f))
    }

    /// Temporal downsampling: output row `i` is the mean of the valid rows in
    /// `[i * stride, (i + 1) * stride)`. Windows without a valid row give zeros.
    /// Returns the pooled matrix and the per-window validity mask.
    pub fn window_mean(&mut self, x: Var, stride: usize, mask: Option<&[bool]>) -> Result<(Var, Vec<bool>)> {
        let (n, d) = self.shape(x);
        if stride == 0 {
            return Err(Error::Config("downsample stride must be positive".into()));
        }
        if mask.is_some_and(|m| m.len() != n) {
            return Err(Error::shape("window_mean", "mask length differs from rows"));
        }
        let out_rows = n.div_ceil(stride);
        let mut windows = Vec::with_capacity(out_rows);
        let mut out = Matrix::zeros(out_rows, d);
        let mut valid_windows = Vec::with_capacity(out_rows);
        let mut f = 0u64;
        for i in 0..out_rows {
            let rows: Vec<usize> = (i * stride..((i + 1) * stride).min(n))
                .filter(|&r| mask.is_none_or(|m| m[r]))
                .collect();
            valid_windows.push(!rows.is_empty());
            if rows.is_empty() {
                windows.push(Vec::new());
                continue;
            }
            let w = S::one() / S::of_usize(rows.len());
            let orow = out.row_mut(i);
            for &r in &rows {
                for (o, &v) in orow.iter_mut().zip(self.nodes[x.0].value.row(r)) {
                    *o += v;
                }
            }
            orow.iter_mut().for_each(|o| *o *= w);
            f += (rows.len() * d) as u64;
            windows.push(rows.into_iter().map(|r| (r, w)).collect());
        }
        Ok((self.push(out, Op::WindowMean { x, windows }, &[x], f), valid_windows))
    }

    /// Sum of all entries, `1 x 1`. Not counted in the FLOP tally.
    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let total = v.as_slice().iter().copied().sum::<S>();
        self.push(Matrix::row_vector(vec![total]), Op::Sum(x), &[x], 0)
    }

    /// Backpropagates from a `1 x 1` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape("backward", "loss must be 1x1"));
        }
        self.backward_with(loss, Matrix::filled(1, 1, S::one()))
    }

    /// Backpropagates `seed` (same shape as `out`) through the tape.
    pub fn backward_with(&self, out: Var, seed: Matrix<S>) -> Result<Gradients<S>> {
        if seed.shape() != self.shape(out) {
            return Err(Error::shape("backward", "seed shape differs from output"));
        }
        let mut grads: Vec<Option<Matrix<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        let mut per_param: Vec<Option<Matrix<S>>> = vec![None; self.params.len()];
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Param(index) => match &mut per_param[*index] {
                    Some(acc) => add_into(acc.as_mut_slice(), g.as_slice()),
                    slot => *slot = Some(g),
                },
                op => self.backprop(op, &node.value, &g, &mut grads),
            }
        }
        Ok(Gradients { per_param })
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Matrix<S>>], v: Var) -> Option<&'g mut Matrix<S>> {
        if !self.needs(v) {
            return None;
        }
        let (r, c) = self.shape(v);
        Some(grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c)))
    }

    fn backprop(&self, op: &Op<S>, y: &Matrix<S>, g: &Matrix<S>, grads: &mut [Option<Matrix<S>>]) {
        match op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    matmul_bt_acc(g, self.value(*b), ga);
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    matmul_at_acc(self.value(*a), g, gb);
                }
            }
            Op::Linear { x, w, b } => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    matmul_bt_acc(g, self.value(*w), gx);
                }
                if let Some(gw) = self.grad_buf(grads, *w) {
                    matmul_at_acc(self.value(*x), g, gw);
                }
                if let Some(gb) = b.and_then(|b| self.grad_buf(grads, b)) {
                    for i in 0..g.rows() {
                        add_into(gb.as_mut_slice(), g.row(i));
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.grad_buf(grads, v) {
                        add_into(gv.as_mut_slice(), g.as_slice());
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    let o = self.value(other).as_slice();
                    if let Some(gv) = self.grad_buf(grads, v) {
                        for ((acc, &gi), &oi) in gv.as_mut_slice().iter_mut().zip(g.as_slice()).zip(o) {
                            *acc += gi * oi;
                        }
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for (acc, &gi) in ga.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *acc += gi * *k;
                    }
                }
            }
            Op::Tanh(a) => self.unary_back(grads, *a, y, g, |y| S::one() - y * y),
            Op::Sigmoid(a) => self.unary_back(grads, *a, y, g, |y| y * (S::one() - y)),
            Op::Relu(a) => self.unary_back(grads, *a, y, g, |y| if y > S::zero() { S::one() } else { S::zero() }),
            Op::Softmax(a) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for i in 0..y.rows() {
                        softmax_back(y.row(i), g.row(i), ga.row_mut(i), S::one());
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (n, d) = xhat.shape();
                let gvals = self.value(*gain).as_slice();
                if let Some(gg) = self.grad_buf(grads, *gain) {
                    for i in 0..n {
                        for ((acc, &gi), &h) in gg.as_mut_slice().iter_mut().zip(g.row(i)).zip(xhat.row(i)) {
                            *acc += gi * h;
                        }
                    }
                }
                if let Some(gb) = self.grad_buf(grads, *bias) {
                    for i in 0..n {
                        add_into(gb.as_mut_slice(), g.row(i));
                    }
                }
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let dn = S::of_usize(d);
                    for (i, &r) in rstd.iter().enumerate().take(n) {
                        let dh: Vec<S> = g.row(i).iter().zip(gvals).map(|(&a, &b)| a * b).collect();
                        let mean_dh = dh.iter().copied().sum::<S>() / dn;
                        let mean_dh_h = dh.iter().zip(xhat.row(i)).map(|(&a, &b)| a * b).sum::<S>() / dn;
                        for ((acc, &dhj), &hj) in gx.row_mut(i).iter_mut().zip(&dh).zip(xhat.row(i)) {
                            *acc += r * (dhj - mean_dh - hj * mean_dh_h);
                        }
                    }
                }
            }
            Op::Attention { q, k, v, probs, scale } => {
                let (n_q, n_k) = probs.shape();
                let mut gp = Matrix::zeros(n_q, n_k);
                matmul_bt_acc(g, self.value(*v), &mut gp);
                if let Some(gv) = self.grad_buf(grads, *v) {
                    matmul_at_acc(probs, g, gv);
                }
                let mut gs = Matrix::zeros(n_q, n_k);
                for i in 0..n_q {
                    softmax_back(probs.row(i), gp.row(i), gs.row_mut(i), *scale);
                }
                if let Some(gq) = self.grad_buf(grads, *q) {
                    matmul_acc(&gs, self.value(*k), gq);
                }
                if let Some(gk) = self.grad_buf(grads, *k) {
                    matmul_at_acc(&gs, self.value(*q), gk);
                }
            }
            Op::LstmCell {
                gates_x,
                state,
                w_hh,
                acts,
                tanh_c,
            } => {
                let h = tanh_c.len();
                let prev = self.value(*state).as_slice();
                let (gh, gc_out) = g.as_slice().split_at(h);
                let mut dz = vec![S::zero(); 4 * h];
                let mut gc_prev = vec![S::zero(); h];
                for j in 0..h {
                    let (i_g, f_g, g_g, o_g) = (acts[j], acts[h + j], acts[2 * h + j], acts[3 * h + j]);
                    let tc = tanh_c[j];
                    let gc = gc_out[j] + gh[j] * o_g * (S::one() - tc * tc);
                    let go = gh[j] * tc;
                    dz[j] = gc * g_g * i_g * (S::one() - i_g);
                    dz[h + j] = gc * prev[h + j] * f_g * (S::one() - f_g);
                    dz[2 * h + j] = gc * i_g * (S::one() - g_g * g_g);
                    dz[3 * h + j] = go * o_g * (S::one() - o_g);
                    gc_prev[j] = gc * f_g;
                }
                let dz = Matrix::row_vector(dz);
                if let Some(ggx) = self.grad_buf(grads, *gates_x) {
                    add_into(ggx.as_mut_slice(), dz.as_slice());
                }
                if let Some(gw) = self.grad_buf(grads, *w_hh) {
                    let hprev = Matrix::row_vector(prev[..h].to_vec());
                    matmul_at_acc(&hprev, &dz, gw);
                }
                if let Some(gs) = self.grad_buf(grads, *state) {
                    let w = self.value(*w_hh);
                    let gs = gs.as_mut_slice();
                    for k in 0..h {
                        gs[k] += w.row(k).iter().zip(dz.as_slice()).map(|(&a, &b)| a * b).sum::<S>();
                        gs[h + k] += gc_prev[k];
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if let Some(gt) = self.grad_buf(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(gt.row_mut(id), g.row(r));
                    }
                }
            }
            Op::CrossEntropy { logits, label, probs } => {
                if let Some(gl) = self.grad_buf(grads, *logits) {
                    let scale = g.as_slice()[0];
                    for (j, (acc, &p)) in gl.as_mut_slice().iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *label { S::one() } else { S::zero() };
                        *acc += scale * (p - onehot);
                    }
                }
            }
            Op::SliceRows { x, start } => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let d = g.cols();
                    add_into(&mut gx.as_mut_slice()[start * d..(start + g.rows()) * d], g.as_slice());
                }
            }
            Op::SliceCols { x, start } => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for i in 0..g.rows() {
                        add_into(&mut gx.row_mut(i)[*start..start + g.cols()], g.row(i));
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(gp) = self.grad_buf(grads, p) {
                        add_into(gp.as_mut_slice(), &g.as_slice()[off..off + len]);
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if let Some(gp) = self.grad_buf(grads, p) {
                        for i in 0..g.rows() {
                            add_into(gp.row_mut(i), &g.row(i)[off..off + w]);
                        }
                    }
                    off += w;
                }
            }
            Op::Transpose(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    add_into(gx.as_mut_slice(), g.transpose().as_slice());
                }
            }
            Op::MeanRows { x, weights } => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (r, &w) in weights.iter().enumerate() {
                        if w != S::zero() {
                            for (acc, &gi) in gx.row_mut(r).iter_mut().zip(g.row(0)) {
                                *acc += w * gi;
                            }
                        }
                    }
                }
            }
            Op::WindowMean { x, windows } => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (i, window) in windows.iter().enumerate() {
                        for &(r, w) in window {
                            for (acc, &gi) in gx.row_mut(r).iter_mut().zip(g.row(i)) {
                                *acc += w * gi;
                            }
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let s = g.as_slice()[0];
                    gx.as_mut_slice().iter_mut().for_each(|v| *v += s);
                }
            }
        }
    }

    fn unary_back(&self, grads: &mut [Option<Matrix<S>>], a: Var, y: &Matrix<S>, g: &Matrix<S>, dy: impl Fn(S) -> S) {
        if let Some(ga) = self.grad_buf(grads, a) {
            for ((acc, &gi), &yi) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(y.as_slice()) {
                *acc += gi * dy(yi);
            }
        }
    }
}

#[inline]
fn sigmoid<S: Scalar>(v: S) -> S {
    S::one() / (S::one() + (-v).exp())
}

fn add_into<S: Scalar>(acc: &mut [S], g: &[S]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// Stable softmax of `row` over the columns `keep` accepts; excluded columns
/// get probability zero. Fails when nothing is kept.
fn softmax_into<S: Scalar>(row: &[S], keep: impl Fn(usize) -> bool, out: &mut [S]) -> std::result::Result<(), ()> {
    let max = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| keep(j))
        .map(|(_, &v)| v)
        .fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return Err(());
    }
    let mut total = S::zero();
    for (j, (o, &v)) in out.iter_mut().zip(row).enumerate() {
        *o = if keep(j) { (v - max).exp() } else { S::zero() };
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(())
}

/// `acc += scale * y * (g - <g, y>)` for one softmax row.
fn softmax_back<S: Scalar>(y: &[S], g: &[S], acc: &mut [S], scale: S) {
    let dot = y.iter().zip(g).map(|(&a, &b)| a * b).sum::<S>();
    for ((a, &yi), &gi) in acc.iter_mut().zip(y).zip(g) {
        *a += scale * yi * (gi - dot);
    }
}
