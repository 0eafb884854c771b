//! Reverse-mode differentiation over a linear tape of matrix primitives.
//!
//! Every primitive appends a node holding its output value. `backward`
//! walks the nodes in exact reverse order of recording and accumulates
//! gradients into the inputs that require them. Parameters enter the tape
//! through [`Tape::param`], which copies the current value out of a
//! [`ParamStore`]; [`Tape::accumulate_into`] writes the resulting gradients
//! back into the store.

use super::matrix::{gemm, DenseMatrix, Operand};
use super::param::{ParamId, ParamStore};
use crate::error::{RecpError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBroadcast(Var, Var),
    AddColBroadcast(Var, Var),
    Relu(Var),
    Exp(Var),
    Log { x: Var, floor: f64 },
    SumRows(Var),
    SumCols(Var),
    SumAll(Var),
    NormalizeRows { x: Var, norms: Vec<f64> },
    SoftmaxRows(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: DenseMatrix,
        inv_std: Vec<f64>,
        mode: NormMode,
    },
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Statistics of one batch-norm forward pass in train mode.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (1/n) variance.
    pub var: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bindings: Vec<(ParamId, Var)>,
}

/// Gradients of a scalar with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

const ROW_NORM_FLOOR: f64 = 1e-12;

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

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dim_err(&self, op: &'static str, a: Var, b: Var) -> RecpError {
        RecpError::Dimension {
            op,
            left: self.value(a).shape(),
            right: self.value(b).shape(),
        }
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives a gradient but is not bound to a parameter.
    pub fn variable(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Bring a parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.bindings.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(self.dim_err("matmul", a, b));
        }
        let out = va.matmul(vb)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self
            .value(a)
            .add(self.value(b))
            .map_err(|_| self.dim_err("add", a, b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self
            .value(a)
            .sub(self.value(b))
            .map_err(|_| self.dim_err("sub", a, b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self
            .value(a)
            .zip_map(self.value(b), |x, y| x * y)
            .map_err(|_| self.dim_err("mul", a, b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// `x + r` where `r` is a 1×c row broadcast down every row of `x`.
    pub fn add_row_broadcast(&mut self, x: Var, r: Var) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(r));
        if vr.rows() != 1 || vr.cols() != vx.cols() {
            return Err(self.dim_err("add_row_broadcast", x, r));
        }
        let mut out = vx.clone();
        let rv = vr.as_slice();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(rv) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(r);
        Ok(self.push(out, Op::AddRowBroadcast(x, r), rg))
    }

    /// `x + c` where `c` is an n×1 column broadcast across every column of `x`.
    pub fn add_col_broadcast(&mut self, x: Var, c: Var) -> Result<Var> {
        let (vx, vc) = (self.value(x), self.value(c));
        if vc.cols() != 1 || vc.rows() != vx.rows() {
            return Err(self.dim_err("add_col_broadcast", x, c));
        }
        let mut out = vx.clone();
        for i in 0..out.rows() {
            let b = vc.get(i, 0);
            out.row_mut(i).iter_mut().for_each(|o| *o += b);
        }
        let rg = self.rg(x) || self.rg(c);
        Ok(self.push(out, Op::AddColBroadcast(x, c), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|v| v.max(floor).ln());
        let rg = self.rg(a);
        self.push(out, Op::Log { x: a, floor }, rg)
    }

    /// Sum across columns: n×c → n×1.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = DenseMatrix::from_fn(va.rows(), 1, |r, _| va.row(r).iter().sum());
        let rg = self.rg(a);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Sum down rows: n×c → 1×c.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut out = DenseMatrix::zeros(1, va.cols());
        for r in 0..va.rows() {
            for (o, v) in out.as_mut_slice().iter_mut().zip(va.row(r)) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::SumCols(a), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = DenseMatrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::SumAll(a), rg)
    }

    /// Scale each row to unit L2 norm (norms floored at 1e-12).
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut out = va.clone();
        let mut norms = Vec::with_capacity(va.rows());
        for r in 0..va.rows() {
            let n = va
                .row(r)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(ROW_NORM_FLOOR);
            out.row_mut(r).iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        let rg = self.rg(a);
        self.push(out, Op::NormalizeRows { x: a, norms }, rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// Column-wise batch normalization followed by `gamma`/`beta` (both 1×c).
    ///
    /// In train mode the batch mean and biased variance are used and returned
    /// so the caller can update running statistics. In eval mode `running`
    /// supplies the statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode,
        running: Option<&BatchStats>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        let vx = self.value(x);
        let (n, c) = vx.shape();
        if self.value(gamma).shape() != (1, c) {
            return Err(self.dim_err("batch_norm gamma", x, gamma));
        }
        if self.value(beta).shape() != (1, c) {
            return Err(self.dim_err("batch_norm beta", x, beta));
        }
        let (stats, batch) = match mode {
            NormMode::Train => {
                if n < 2 {
                    return Err(RecpError::DegenerateBatch { rows: n });
                }
                let s = column_stats(vx);
                (s.clone(), Some(s))
            }
            NormMode::Eval => {
                let s = running.cloned().ok_or_else(|| {
                    RecpError::InvalidInput("eval-mode batch norm without running stats".into())
                })?;
                if s.mean.len() != c || s.var.len() != c {
                    return Err(RecpError::Dimension {
                        op: "batch_norm running stats",
                        left: (n, c),
                        right: (1, s.mean.len()),
                    });
                }
                (s, None)
            }
        };
        let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xhat = DenseMatrix::from_fn(n, c, |r, j| (vx.get(r, j) - stats.mean[j]) * inv_std[j]);
        let g = self.value(gamma).as_slice();
        let b = self.value(beta).as_slice();
        let out = DenseMatrix::from_fn(n, c, |r, j| g[j] * xhat.get(r, j) + b[j]);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            },
            rg,
        );
        Ok((v, batch))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(RecpError::Dimension {
                op: "backward (loss must be 1x1)",
                left: lv.shape(),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if wants(*a) {
                    let slot = slot(grads, *a, va.shape());
                    gemm(Operand::plain(g), Operand::t(vb), slot, 1.0);
                }
                if wants(*b) {
                    let slot = slot(grads, *b, vb.shape());
                    gemm(Operand::t(va), Operand::plain(g), slot, 1.0);
                }
            }
            Op::Transpose(a) => {
                if wants(*a) {
                    accumulate(grads, *a, &g.transpose());
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g);
                }
                if wants(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g);
                }
                if wants(*b) {
                    accumulate(grads, *b, &g.scale(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let d = g.zip_map(val(*b), |x, y| x * y).expect("shape");
                    accumulate(grads, *a, &d);
                }
                if wants(*b) {
                    let d = g.zip_map(val(*a), |x, y| x * y).expect("shape");
                    accumulate(grads, *b, &d);
                }
            }
            Op::Scale(a, s) => {
                if wants(*a) {
                    accumulate(grads, *a, &g.scale(*s));
                }
            }
            Op::AddRowBroadcast(x, r) => {
                if wants(*x) {
                    accumulate(grads, *x, g);
                }
                if wants(*r) {
                    let mut d = DenseMatrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in d.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(grads, *r, &d);
                }
            }
            Op::AddColBroadcast(x, c) => {
                if wants(*x) {
                    accumulate(grads, *x, g);
                }
                if wants(*c) {
                    let d = DenseMatrix::from_fn(g.rows(), 1, |i, _| g.row(i).iter().sum());
                    accumulate(grads, *c, &d);
                }
            }
            Op::Relu(a) => {
                if wants(*a) {
                    let d = g
                        .zip_map(val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })
                        .expect("shape");
                    accumulate(grads, *a, &d);
                }
            }
            Op::Exp(a) => {
                if wants(*a) {
                    let d = g.zip_map(&node.value, |gv, y| gv * y).expect("shape");
                    accumulate(grads, *a, &d);
                }
            }
            Op::Log { x, floor } => {
                if wants(*x) {
                    let f = *floor;
                    let d = g
                        .zip_map(val(*x), |gv, xv| if xv > f { gv / xv } else { 0.0 })
                        .expect("shape");
                    accumulate(grads, *x, &d);
                }
            }
            Op::SumRows(a) => {
                if wants(*a) {
                    let va = val(*a);
                    let d = DenseMatrix::from_fn(va.rows(), va.cols(), |r, _| g.get(r, 0));
                    accumulate(grads, *a, &d);
                }
            }
            Op::SumCols(a) => {
                if wants(*a) {
                    let va = val(*a);
                    let d = DenseMatrix::from_fn(va.rows(), va.cols(), |_, c| g.get(0, c));
                    accumulate(grads, *a, &d);
                }
            }
            Op::SumAll(a) => {
                if wants(*a) {
                    let va = val(*a);
                    let d = DenseMatrix::filled(va.rows(), va.cols(), g.item());
                    accumulate(grads, *a, &d);
                }
            }
            Op::NormalizeRows { x, norms } => {
                if wants(*x) {
                    // d x = (g - y (y·g)) / ‖x‖
                    let y = &node.value;
                    let mut d = DenseMatrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let n = norms[r];
                        for ((o, yv), gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = (gv - yv * dot) / n;
                        }
                    }
                    accumulate(grads, *x, &d);
                }
            }
            Op::SoftmaxRows(a) => {
                if wants(*a) {
                    // d x = y ⊙ (g - (g·y))
                    let y = &node.value;
                    let mut d = DenseMatrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, yv), gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - dot);
                        }
                    }
                    accumulate(grads, *a, &d);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            } => {
                let (n, c) = xhat.shape();
                if wants(*gamma) {
                    let mut d = DenseMatrix::zeros(1, c);
                    for r in 0..n {
                        for j in 0..c {
                            d.as_mut_slice()[j] += g.get(r, j) * xhat.get(r, j);
                        }
                    }
                    accumulate(grads, *gamma, &d);
                }
                if wants(*beta) {
                    let mut d = DenseMatrix::zeros(1, c);
                    for r in 0..n {
                        for (o, v) in d.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(grads, *beta, &d);
                }
                if wants(*x) {
                    let gam = val(*gamma).as_slice();
                    let mut d = DenseMatrix::zeros(n, c);
                    match mode {
                        NormMode::Eval => {
                            for r in 0..n {
                                for j in 0..c {
                                    d.set(r, j, g.get(r, j) * gam[j] * inv_std[j]);
                                }
                            }
                        }
                        NormMode::Train => {
                            let nf = n as f64;
                            for j in 0..c {
                                let mut sum_d = 0.0;
                                let mut sum_dx = 0.0;
                                for r in 0..n {
                                    let dxh = g.get(r, j) * gam[j];
                                    sum_d += dxh;
                                    sum_dx += dxh * xhat.get(r, j);
                                }
                                for r in 0..n {
                                    let dxh = g.get(r, j) * gam[j];
                                    let v = inv_std[j] / nf
                                        * (nf * dxh - sum_d - xhat.get(r, j) * sum_dx);
                                    d.set(r, j, v);
                                }
                            }
                        }
                    }
                    accumulate(grads, *x, &d);
                }
            }
        }
    }

    /// Add the gradients of every bound parameter into `store`.
    pub fn accumulate_into(&self, grads: &Gradients, store: &mut ParamStore) {
        for &(id, v) in &self.bindings {
            if let Some(g) = grads.get(v) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

fn slot<'g>(
    grads: &'g mut [Option<DenseMatrix>],
    v: Var,
    shape: (usize, usize),
) -> &'g mut DenseMatrix {
    grads[v.0].get_or_insert_with(|| DenseMatrix::zeros(shape.0, shape.1))
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, d: &DenseMatrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(d),
        slot @ None => *slot = Some(d.clone()),
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

fn column_stats(x: &DenseMatrix) -> BatchStats {
    let (n, c) = x.shape();
    let nf = n as f64;
    let mut mean = vec![0.0; c];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; c];
    for r in 0..n {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= nf);
    BatchStats { mean, var }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_row() {
        let s = softmax_rows(&DenseMatrix::from_rows(&[[0.0, 0.0]]));
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_analytic_row() {
        let s = softmax_rows(&DenseMatrix::from_rows(&[[1f64.ln(), 3f64.ln()]]));
        assert!((s.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_logits_shift_invariant() {
        let big = softmax_rows(&DenseMatrix::from_rows(&[[1000.0, 1000.5]]));
        let small = softmax_rows(&DenseMatrix::from_rows(&[[0.0, 0.5]]));
        assert!(big.is_finite());
        for (a, b) in big.as_slice().iter().zip(small.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.constant(DenseMatrix::from_rows(&[[-1.0, 0.0, 2.0]]));
        let y = t.relu(x);
        assert_eq!(t.value(y).as_slice(), &[0.0, 0.0, 2.0]);
        let neg = t.constant(DenseMatrix::from_rows(&[[-3.0, -0.5]]));
        let y2 = t.relu(neg);
        assert_eq!(t.value(y2).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.variable(DenseMatrix::from_rows(&[[0.0, 1.0]]));
        let y = t.relu(x);
        let s = t.sum_all(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn batch_norm_two_values() {
        let mut t = Tape::new();
        let x = t.constant(DenseMatrix::from_rows(&[[1.0], [3.0]]));
        let g = t.constant(DenseMatrix::scalar(1.0));
        let b = t.constant(DenseMatrix::scalar(0.0));
        let (y, stats) = t.batch_norm(x, g, b, NormMode::Train, None, 1e-12).unwrap();
        let y = t.value(y);
        assert!((y.get(0, 0) + 1.0).abs() < 1e-9);
        assert!((y.get(1, 0) - 1.0).abs() < 1e-9);
        let stats = stats.unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.var, vec![1.0]);
    }

    #[test]
    fn batch_norm_identity_on_standardized_column() {
        let mut t = Tape::new();
        let col = [-1.5, -0.5, 0.5, 1.5];
        let mean = 0.0;
        let var: f64 = col.iter().map(|v: &f64| (v - mean).powi(2)).sum::<f64>() / 4.0;
        let std = var.sqrt();
        let rows: Vec<[f64; 1]> = col.iter().map(|v| [v / std]).collect();
        let x = t.constant(DenseMatrix::from_rows(&rows));
        let g = t.constant(DenseMatrix::scalar(1.0));
        let b = t.constant(DenseMatrix::scalar(0.0));
        let (y, _) = t.batch_norm(x, g, b, NormMode::Train, None, 1e-5).unwrap();
        for (a, e) in t.value(y).as_slice().iter().zip(t.value(x).as_slice()) {
            assert!((a - e).abs() < 1e-5);
        }
    }

    #[test]
    fn batch_norm_single_row_rejected() {
        let mut t = Tape::new();
        let x = t.constant(DenseMatrix::from_rows(&[[1.0, 2.0]]));
        let g = t.constant(DenseMatrix::filled(1, 2, 1.0));
        let b = t.constant(DenseMatrix::zeros(1, 2));
        let err = t
            .batch_norm(x, g, b, NormMode::Train, None, 1e-5)
            .unwrap_err();
        assert!(matches!(err, RecpError::DegenerateBatch { rows: 1 }));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.variable(DenseMatrix::zeros(2, 2));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn same_var_twice_in_mul() {
        let mut t = Tape::new();
        let x = t.variable(DenseMatrix::from_rows(&[[3.0]]));
        let sq = t.mul(x, x).unwrap();
        let g = t.backward(sq).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(DenseMatrix::from_rows(&[[1.0, 2.0]]));
        let x = t.variable(DenseMatrix::from_rows(&[[1.0], [1.0]]));
        let y = t.matmul(c, x).unwrap();
        let g = t.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().as_slice(), &[1.0, 2.0]);
    }
}
