//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass; `backward`
//! walks the record in reverse and returns gradients for the parameters
//! that were read through [`Tape::param`].

use super::matrix::{gemm, Matrix};
use super::params::{Grads, ParamSet};
use super::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Silu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    MeanRows(Var),
    SumAll(Var),
    DepthwiseConv {
        x: Var,
        kernel: Var,
        stride: usize,
        pad: usize,
    },
    Gather(Var, Vec<usize>),
    BceLogits(Var, Matrix),
    CrossEntropy(Var, Vec<usize>),
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::with_capacity(256),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Reads parameter `id`; repeated reads share one node.
    pub fn param(&mut self, id: super::params::ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id.0));
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let bv = self.value(b);
        let mut out = self.value(a).clone();
        for (o, x) in out.data.iter_mut().zip(&bv.data) {
            *o -= x;
        }
        self.push(out, Op::Sub(a, b))
    }

    /// Adds the `[1, n]` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!(bv.rows, 1);
        assert_eq!(bv.cols, self.value(a).cols);
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            for (o, x) in out.row_mut(r).iter_mut().zip(&bv.data) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!(self.value(a).shape(), bv.shape());
        let mut out = self.value(a).clone();
        for (o, x) in out.data.iter_mut().zip(&bv.data) {
            *o *= x;
        }
        self.push(out, Op::Mul(a, b))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        self.push(out, Op::Affine(a, scale))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * sigmoid(x));
        self.push(out, Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            softmax_row(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.rows);
        let out = Matrix::from_vec(
            len,
            av.cols,
            av.data[start * av.cols..(start + len) * av.cols].to_vec(),
        );
        self.push(out, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols);
        let mut out = Matrix::zeros(av.rows, len);
        for r in 0..av.rows {
            out.row_mut(r)
                .copy_from_slice(&av.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols);
            rows += v.rows;
            data.extend_from_slice(&v.data);
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, rows);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + v.cols].copy_from_slice(v.row(r));
            }
            offset += v.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Reinterprets the row-major buffer with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.len(), rows * cols);
        let out = Matrix::from_vec(rows, cols, av.data.clone());
        self.push(out, Op::Reshape(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(1, av.cols);
        for r in 0..av.rows {
            for (o, x) in out.data.iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        let n = av.rows as f64;
        out.scale_assign(1.0 / n);
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::SumAll(a))
    }

    /// Per-channel 1-D convolution along rows (time) of `x: [T, C]` with
    /// `kernel: [K, C]`, zero padding `pad` on both ends.
    pub fn depthwise_conv(&mut self, x: Var, kernel: Var, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        let kv = self.value(kernel);
        assert_eq!(xv.cols, kv.cols);
        let (t_in, c) = xv.shape();
        let k = kv.rows;
        let t_out = (t_in + 2 * pad - k) / stride + 1;
        let mut out = Matrix::zeros(t_out, c);
        for t in 0..t_out {
            let orow = &mut out.data[t * c..(t + 1) * c];
            for j in 0..k {
                let src = (t * stride + j) as isize - pad as isize;
                if src < 0 || src as usize >= t_in {
                    continue;
                }
                let xrow = xv.row(src as usize);
                let krow = kv.row(j);
                for ch in 0..c {
                    orow[ch] += krow[ch] * xrow[ch];
                }
            }
        }
        self.push(
            out,
            Op::DepthwiseConv {
                x,
                kernel,
                stride,
                pad,
            },
        )
    }

    /// Row lookup into `table`.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Var {
        let tv = self.value(table);
        let mut out = Matrix::zeros(idx.len(), tv.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(tv.row(i));
        }
        self.push(out, Op::Gather(table, idx.to_vec()))
    }

    /// Sum over all entries of the numerically stable binary cross-entropy
    /// between `sigmoid(logits)` and `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Matrix) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.shape(), targets.shape());
        let loss: f64 = lv
            .data
            .iter()
            .zip(&targets.data)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::BceLogits(logits, targets.clone()),
        )
    }

    /// Mean over rows of the softmax cross-entropy against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let loss = total / targets.len() as f64;
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy(logits, targets.to_vec()),
        )
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be scalar");
        self.backward_from(&[(loss, Matrix::filled(1, 1, 1.0))])
    }

    /// Backpropagates externally supplied output gradients.
    pub fn backward_from(&self, seeds: &[(Var, Matrix)]) -> Grads {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, g) in seeds {
            assert_eq!(self.value(*v).shape(), g.shape(), "seed gradient shape");
            accumulate(&mut grads, *v, g.clone());
            last = last.max(v.0);
        }
        let mut out = self.params.zero_grads();

        for i in (0..=last).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => out.0[*pid].add_assign(&g),
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    gemm(false, true, &g, bv, 0.0, &mut ga);
                    let mut gb = Matrix::zeros(bv.rows, bv.cols);
                    gemm(true, false, av, &g, 0.0, &mut gb);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, b) => {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, x) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let mut ga = g.clone();
                    for (o, x) in ga.data.iter_mut().zip(&bv.data) {
                        *o *= x;
                    }
                    let mut gb = g;
                    for (o, x) in gb.data.iter_mut().zip(&av.data) {
                        *o *= x;
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Affine(a, scale) => {
                    let s = *scale;
                    accumulate(&mut grads, *a, g.map(|x| x * s));
                }
                Op::Silu(a) => {
                    let xv = self.value(*a);
                    let mut ga = g;
                    for (o, &x) in ga.data.iter_mut().zip(&xv.data) {
                        let s = sigmoid(x);
                        *o *= s * (1.0 + x * (1.0 - s));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    for (o, &y) in ga.data.iter_mut().zip(&node.value.data) {
                        *o *= y * (1.0 - y);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    for (o, &y) in ga.data.iter_mut().zip(&node.value.data) {
                        *o *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let xv = self.value(*a);
                    let mut ga = g;
                    for (o, &x) in ga.data.iter_mut().zip(&xv.data) {
                        if x <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = g;
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let gr = ga.row_mut(r);
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                        for (gv, yv) in gr.iter_mut().zip(yr) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::SliceRows(a, start) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    ga.data[start * av.cols..start * av.cols + g.len()].copy_from_slice(&g.data);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    for r in 0..g.rows {
                        ga.row_mut(r)[*start..start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let gp = Matrix::from_vec(
                            rows,
                            cols,
                            g.data[offset..offset + rows * cols].to_vec(),
                        );
                        offset += rows * cols;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let mut gp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::Reshape(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::from_vec(rows, cols, g.data));
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(rows, cols);
                    let inv = 1.0 / rows as f64;
                    for r in 0..rows {
                        for (o, x) in ga.row_mut(r).iter_mut().zip(&g.data) {
                            *o = x * inv;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(rows, cols, g.data[0]));
                }
                Op::DepthwiseConv {
                    x,
                    kernel,
                    stride,
                    pad,
                } => {
                    let xv = self.value(*x);
                    let kv = self.value(*kernel);
                    let (t_in, c) = xv.shape();
                    let mut gx = Matrix::zeros(t_in, c);
                    let mut gk = Matrix::zeros(kv.rows, c);
                    for t in 0..g.rows {
                        let grow = g.row(t);
                        for j in 0..kv.rows {
                            let src = (t * stride + j) as isize - *pad as isize;
                            if src < 0 || src as usize >= t_in {
                                continue;
                            }
                            let s = src as usize;
                            let xrow = xv.row(s);
                            let krow = kv.row(j);
                            for ch in 0..c {
                                gk.data[j * c + ch] += grow[ch] * xrow[ch];
                                gx.data[s * c + ch] += grow[ch] * krow[ch];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *kernel, gk);
                }
                Op::Gather(table, idx) => {
                    let tv = self.value(*table);
                    let mut gt = Matrix::zeros(tv.rows, tv.cols);
                    for (r, &i) in idx.iter().enumerate() {
                        for (o, x) in gt.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::BceLogits(logits, targets) => {
                    let lv = self.value(*logits);
                    let s = g.data[0];
                    let mut gl = Matrix::zeros(lv.rows, lv.cols);
                    for ((o, &z), &y) in gl.data.iter_mut().zip(&lv.data).zip(&targets.data) {
                        *o = s * (sigmoid(z) - y);
                    }
                    accumulate(&mut grads, *logits, gl);
                }
                Op::CrossEntropy(logits, targets) => {
                    let lv = self.value(*logits);
                    let s = g.data[0] / targets.len() as f64;
                    let mut gl = lv.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = gl.row_mut(r);
                        softmax_row(row);
                        row[t] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= s;
                        }
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
