//! Tape-based reverse-mode differentiation over 2-D matrices.
//!
//! A [`Graph`] records every operation as a node holding its output value.
//! [`Graph::backward`] walks the tape in reverse and returns the gradients of
//! a scalar node with respect to every parameter (and every node) that fed it.
//! Parameters are read from the borrowed [`ParamStore`] without copying, so
//! independent graphs over the same store can run on separate threads.

use std::sync::Arc;

use super::kernels::{self, RowMix};
use super::param::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rnnt;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LogSoftmax(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    RowMix {
        x: Var,
        mix: Arc<RowMix>,
    },
    ColMask {
        x: Var,
        keep: Vec<bool>,
    },
    AddConst(Var),
    PairAdd(Var, Var),
    DepthwiseConv {
        x: Var,
        kernel: Var,
        bias: Var,
    },
    Rnnt {
        log_probs: Var,
        grad: Vec<f64>,
    },
    Sum(Var),
    AddScalars(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Backward {
    pub params: Gradients,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Backward {
    /// Gradient with respect to an arbitrary node, if it received any.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

fn dim_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Dimension(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || rows * cols == value.len());
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.store.get(*id).value.data(),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let (r, c) = self.shape(v);
        Tensor::new(vec![r, c], self.value(v).to_vec()).expect("node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; a tensor of rank != 2 is viewed as `rows × last-axis`.
    pub fn input(&mut self, t: &Tensor) -> Var {
        let (r, c) = (t.rows(), t.cols());
        self.push(Op::Leaf, r, c, t.data().to_vec())
    }

    pub fn input_raw(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        self.push(Op::Leaf, rows, cols, data)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = &self.store.get(id).value;
        let (r, c) = (t.rows(), t.cols());
        self.push(Op::Param(id), r, c, Vec::new())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(dim_err("matmul", sa, sb));
        }
        let out = kernels::matmul(self.value(a), self.value(b), sa.0, sa.1, sb.1);
        Ok(self.push(Op::MatMul(a, b), sa.0, sb.1, out))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(dim_err("matmul_nt", sa, sb));
        }
        let out = kernels::matmul_nt(self.value(a), self.value(b), sa.0, sa.1, sb.0);
        Ok(self.push(Op::MatMulNt(a, b), sa.0, sb.0, out))
    }

    /// Adds a length-`cols` bias to every row.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sb.0 * sb.1 != sx.1 {
            return Err(dim_err("add_bias", sx, sb));
        }
        let bias = self.value(b);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(sx.1) {
            row.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
        }
        Ok(self.push(Op::AddBias(x, b), sx.0, sx.1, out))
    }

    /// `x · w + b`, the affine map used by every linear layer.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(dim_err("add", sa, sb));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a, b), sa.0, sa.1, out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(dim_err("sub", sa, sb));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(Op::Sub(a, b), sa.0, sa.1, out))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v * s).collect();
        self.push(Op::Scale(x, s), r, c, out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v.max(0.0)).collect();
        self.push(Op::Relu(x), r, c, out)
    }

    /// Row-wise log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.value(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("log_softmax input is not finite".into()));
        }
        let out = kernels::log_softmax_rows(self.value(x), c);
        Ok(self.push(Op::LogSoftmax(x), r, c, out))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = kernels::softmax_rows(self.value(x), c);
        self.push(Op::Softmax(x), r, c, out)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let (sg, sb) = (self.shape(gamma), self.shape(beta));
        if sg.0 * sg.1 != c || sb.0 * sb.1 != c {
            return Err(dim_err("layer_norm", (r, c), sg));
        }
        let (out, mean, rstd) =
            kernels::layer_norm_rows(self.value(x), c, self.value(gamma), self.value(beta));
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            },
            r,
            c,
            out,
        ))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (tr, tc) = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= tr) {
            return Err(Error::Validation(format!(
                "row {bad} out of range for table with {tr} rows"
            )));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * tc);
        for &i in ids {
            out.extend_from_slice(&tv[i * tc..(i + 1) * tc]);
        }
        Ok(self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ids.len(),
            tc,
            out,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        if let Some(p) = parts.iter().find(|p| self.shape(**p).0 != rows) {
            return Err(dim_err("concat_cols", self.shape(parts[0]), self.shape(*p)));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let c = self.shape(*p).1;
                out.extend_from_slice(&self.value(*p)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), rows, cols, out))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > c {
            return Err(Error::Dimension(format!(
                "column slice {start}..{} of {c} columns",
                start + len
            )));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for row in xv.chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        Ok(self.push(Op::SliceCols { x, start }, r, len, out))
    }

    pub fn row_mix(&mut self, x: Var, mix: Arc<RowMix>) -> Result<Var> {
        let (r, c) = self.shape(x);
        if mix.n_in != r {
            return Err(Error::Dimension(format!(
                "row mix expects {} rows, got {r}",
                mix.n_in
            )));
        }
        let out = mix.apply(self.value(x), c);
        let n = mix.n_out();
        Ok(self.push(Op::RowMix { x, mix }, n, c, out))
    }

    /// Zeroes every column whose `keep` flag is false.
    pub fn col_mask(&mut self, x: Var, keep: Vec<bool>) -> Result<Var> {
        let (r, c) = self.shape(x);
        if keep.len() != c {
            return Err(Error::Dimension(format!(
                "column mask of length {} for {c} columns",
                keep.len()
            )));
        }
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c) {
            for (v, k) in row.iter_mut().zip(&keep) {
                if !k {
                    *v = 0.0;
                }
            }
        }
        Ok(self.push(Op::ColMask { x, keep }, r, c, out))
    }

    /// Adds a constant (non-differentiable) offset of the same shape.
    pub fn add_const(&mut self, x: Var, offset: &[f64]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if offset.len() != r * c {
            return Err(Error::Dimension("add_const offset size".into()));
        }
        let out = self.value(x).iter().zip(offset).map(|(a, b)| a + b).collect();
        Ok(self.push(Op::AddConst(x), r, c, out))
    }

    /// All pairwise sums: row `t·Rb + u` of the result is `a[t] + b[u]`.
    pub fn pair_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(dim_err("pair_add", sa, sb));
        }
        let c = sa.1;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(sa.0 * sb.0 * c);
        for t in 0..sa.0 {
            let arow = &av[t * c..(t + 1) * c];
            for u in 0..sb.0 {
                let brow = &bv[u * c..(u + 1) * c];
                out.extend(arow.iter().zip(brow).map(|(x, y)| x + y));
            }
        }
        Ok(self.push(Op::PairAdd(a, b), sa.0 * sb.0, c, out))
    }

    pub fn depthwise_conv(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (t, c) = self.shape(x);
        let (sk, sb) = (self.shape(kernel), self.shape(bias));
        if sk.1 != c || sb.0 * sb.1 != c {
            return Err(dim_err("depthwise_conv", (t, c), sk));
        }
        let out = kernels::depthwise_conv(
            self.value(x),
            self.value(kernel),
            self.value(bias),
            t,
            c,
        );
        Ok(self.push(Op::DepthwiseConv { x, kernel, bias }, t, c, out))
    }

    /// RNN-T negative log-likelihood of `labels` given joint log-probs laid
    /// out as `(frames · (labels+1)) × vocab`.
    pub fn rnnt_loss(&mut self, log_probs: Var, frames: usize, labels: &[u32], blank: u32) -> Result<Var> {
        let (r, v) = self.shape(log_probs);
        if r != frames * (labels.len() + 1) {
            return Err(Error::Dimension(format!(
                "lattice of {r} rows does not match {frames} frames x {} label positions",
                labels.len() + 1
            )));
        }
        let out = rnnt::rnnt_loss_raw(self.value(log_probs), frames, v, labels, blank)?;
        Ok(self.push(
            Op::Rnnt {
                log_probs,
                grad: out.grad,
            },
            1,
            1,
            vec![out.loss],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(Op::Sum(x), 1, 1, vec![s])
    }

    pub fn add_scalars(&mut self, xs: &[Var]) -> Var {
        let s = xs.iter().map(|x| self.value(*x)[0]).sum();
        self.push(Op::AddScalars(xs.to_vec()), 1, 1, vec![s])
    }

    /// Reverse pass from a scalar node. Only parameter gradients are kept.
    pub fn backward(&self, root: Var) -> Result<Backward> {
        self.run_backward(root, false)
    }

    /// Like [`Graph::backward`] but also keeps the gradient of every node.
    pub fn backward_with_nodes(&self, root: Var) -> Result<Backward> {
        self.run_backward(root, true)
    }

    fn run_backward(&self, root: Var, keep_nodes: bool) -> Result<Backward> {
        if self.shape(root) != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward needs a scalar root, got {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params = Gradients::new(self.store.len());
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if keep_nodes {
                grads[i] = Some(g.clone());
            }
            self.propagate(i, g, &mut grads, &mut params);
        }
        Ok(Backward {
            params,
            nodes: if keep_nodes { grads } else { Vec::new() },
        })
    }

    fn propagate(
        &self,
        i: usize,
        g: Vec<f64>,
        grads: &mut [Option<Vec<f64>>],
        params: &mut Gradients,
    ) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => params.add_to(*id, &g),
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = node.cols;
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = dOut · Bᵀ
                let da = kernels::matmul_nt(&g, bv, n, m, k);
                // dB = Aᵀ · dOut
                let mut db = vec![0.0; k * m];
                for r in 0..n {
                    let grow = &g[r * m..(r + 1) * m];
                    for p in 0..k {
                        let av = av[r * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let dbrow = &mut db[p * m..(p + 1) * m];
                        dbrow.iter_mut().zip(grow).for_each(|(d, gv)| *d += av * gv);
                    }
                }
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::MatMulNt(a, b) => {
                let (n, k) = self.shape(*a);
                let m = node.cols;
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = kernels::matmul(&g, bv, n, m, k);
                let mut db = vec![0.0; m * k];
                for r in 0..n {
                    let arow = &av[r * k..(r + 1) * k];
                    for j in 0..m {
                        let gv = g[r * m + j];
                        if gv == 0.0 {
                            continue;
                        }
                        let dbrow = &mut db[j * k..(j + 1) * k];
                        dbrow.iter_mut().zip(arow).for_each(|(d, x)| *d += gv * x);
                    }
                }
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::AddBias(x, b) => {
                let c = node.cols;
                let mut db = vec![0.0; c];
                for row in g.chunks(c) {
                    db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                acc(grads, *b, db);
                acc(grads, *x, g);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g);
            }
            Op::Sub(a, b) => {
                acc(grads, *b, g.iter().map(|v| -v).collect());
                acc(grads, *a, g);
            }
            Op::Scale(x, s) => acc(grads, *x, g.iter().map(|v| v * s).collect()),
            Op::Relu(x) => {
                let dx = g
                    .iter()
                    .zip(&node.value)
                    .map(|(gv, y)| if *y > 0.0 { *gv } else { 0.0 })
                    .collect();
                acc(grads, *x, dx);
            }
            Op::LogSoftmax(x) => {
                let c = node.cols;
                let mut dx = vec![0.0; g.len()];
                for ((d, gr), y) in dx.chunks_mut(c).zip(g.chunks(c)).zip(node.value.chunks(c)) {
                    let s: f64 = gr.iter().sum();
                    for j in 0..c {
                        d[j] = gr[j] - y[j].exp() * s;
                    }
                }
                acc(grads, *x, dx);
            }
            Op::Softmax(x) => {
                let c = node.cols;
                let mut dx = vec![0.0; g.len()];
                for ((d, gr), y) in dx.chunks_mut(c).zip(g.chunks(c)).zip(node.value.chunks(c)) {
                    let s = kernels::dot(gr, y);
                    for j in 0..c {
                        d[j] = y[j] * (gr[j] - s);
                    }
                }
                acc(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => {
                let c = node.cols;
                let xv = self.value(*x);
                let gam = self.value(*gamma);
                let mut dx = vec![0.0; g.len()];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut xhat = vec![0.0; c];
                let mut dxhat = vec![0.0; c];
                for r in 0..node.rows {
                    let xr = &xv[r * c..(r + 1) * c];
                    let gr = &g[r * c..(r + 1) * c];
                    for j in 0..c {
                        xhat[j] = (xr[j] - mean[r]) * rstd[r];
                        dxhat[j] = gr[j] * gam[j];
                        dgamma[j] += gr[j] * xhat[j];
                        dbeta[j] += gr[j];
                    }
                    let m1 = dxhat.iter().sum::<f64>() / c as f64;
                    let m2 = kernels::dot(&dxhat, &xhat) / c as f64;
                    for j in 0..c {
                        dx[r * c + j] = rstd[r] * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *gamma, dgamma);
                acc(grads, *beta, dbeta);
            }
            Op::Gather { table, ids } => {
                let (tr, tc) = self.shape(*table);
                let mut dt = vec![0.0; tr * tc];
                for (row, &i) in g.chunks(tc).zip(ids) {
                    dt[i * tc..(i + 1) * tc]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(d, v)| *d += v);
                }
                acc(grads, *table, dt);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let (pr, pc) = self.shape(*p);
                    let mut dp = Vec::with_capacity(pr * pc);
                    for row in g.chunks(node.cols) {
                        dp.extend_from_slice(&row[off..off + pc]);
                    }
                    off += pc;
                    acc(grads, *p, dp);
                }
            }
            Op::SliceCols { x, start } => {
                let (xr, xc) = self.shape(*x);
                let mut dx = vec![0.0; xr * xc];
                for (drow, grow) in dx.chunks_mut(xc).zip(g.chunks(node.cols)) {
                    drow[*start..*start + node.cols].copy_from_slice(grow);
                }
                acc(grads, *x, dx);
            }
            Op::RowMix { x, mix } => {
                let c = node.cols;
                let mut dx = vec![0.0; mix.n_in * c];
                for (grow, terms) in g.chunks(c).zip(&mix.rows) {
                    for &(src, w) in terms {
                        dx[src * c..(src + 1) * c]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(d, v)| *d += w * v);
                    }
                }
                acc(grads, *x, dx);
            }
            Op::ColMask { x, keep } => {
                let mut dx = g;
                for row in dx.chunks_mut(node.cols) {
                    for (v, k) in row.iter_mut().zip(keep) {
                        if !k {
                            *v = 0.0;
                        }
                    }
                }
                acc(grads, *x, dx);
            }
            Op::AddConst(x) => acc(grads, *x, g),
            Op::PairAdd(a, b) => {
                let (ra, c) = self.shape(*a);
                let rb = self.shape(*b).0;
                let mut da = vec![0.0; ra * c];
                let mut db = vec![0.0; rb * c];
                for t in 0..ra {
                    for u in 0..rb {
                        let grow = &g[(t * rb + u) * c..(t * rb + u + 1) * c];
                        for j in 0..c {
                            da[t * c + j] += grow[j];
                            db[u * c + j] += grow[j];
                        }
                    }
                }
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::DepthwiseConv { x, kernel, bias } => {
                let (t, c) = (node.rows, node.cols);
                let xv = self.value(*x);
                let kv = self.value(*kernel);
                let k = kv.len() / c;
                let pad = (k - 1) / 2;
                let mut dx = vec![0.0; t * c];
                let mut dk = vec![0.0; k * c];
                let mut db = vec![0.0; c];
                for ti in 0..t {
                    let grow = &g[ti * c..(ti + 1) * c];
                    db.iter_mut().zip(grow).for_each(|(d, v)| *d += v);
                    for ki in 0..k {
                        let src = ti as isize + ki as isize - pad as isize;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        let s = src as usize;
                        for j in 0..c {
                            dx[s * c + j] += grow[j] * kv[ki * c + j];
                            dk[ki * c + j] += grow[j] * xv[s * c + j];
                        }
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *kernel, dk);
                acc(grads, *bias, db);
            }
            Op::Rnnt { log_probs, grad } => {
                let s = g[0];
                acc(grads, *log_probs, grad.iter().map(|v| v * s).collect());
            }
            Op::Sum(x) => {
                let (r, c) = self.shape(*x);
                acc(grads, *x, vec![g[0]; r * c]);
            }
            Op::AddScalars(xs) => {
                for x in xs {
                    acc(grads, *x, vec![g[0]]);
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot => *slot = Some(g),
    }
}
