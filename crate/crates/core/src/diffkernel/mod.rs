//! Dense 2-D reverse-mode autodiff.
//!
//! A [`Tape`] owns every intermediate value. Operations append a node and
//! return a [`Var`] handle; node indices are therefore already a topological
//! order and [`Tape::backward`] simply walks them in reverse.
//!
//! Every op checks its output for NaN/Inf and fails with
//! [`Error::NonFinite`] naming the op. Binary element-wise ops broadcast
//! along any axis of length 1.

pub mod gradcheck;

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>),
    SegmentSoftmax(Var, Arc<[usize]>),
    Softmax(Var, usize),
    LogSoftmax(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Powf(Var, f64),
    ClampMin(Var, f64),
    Sum(Var),
    Mean(Var),
    SumAxis(Var),
    Pick(Var, Arc<[usize]>),
    MaskMul(Var, Arc<Array2<f64>>),
    GraphNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Array2<f64>,
    },
    RowL2Normalize(Var, Array2<f64>),
    Transpose(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for nodes that do not need one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but returns an owned zero matrix of the given
    /// shape when the node received no gradient.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

fn shape_of(a: &Array2<f64>) -> (usize, usize) {
    (a.nrows(), a.ncols())
}

fn broadcast_shape(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Shape { op, lhs: a, rhs: b }),
    }
}

/// Sums `g` down to `shape` along broadcast axes.
fn reduce_to(g: &Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut out = g.clone();
    if shape.0 == 1 && out.nrows() != 1 {
        out = out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && out.ncols() != 1 {
        out = out.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    out
}

fn binary_map(
    op: &'static str,
    a: &Array2<f64>,
    b: &Array2<f64>,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Array2<f64>> {
    let shape = broadcast_shape(op, shape_of(a), shape_of(b))?;
    let av = a.broadcast(shape).expect("checked shape");
    let bv = b.broadcast(shape).expect("checked shape");
    Ok(Zip::from(&av).and(&bv).map_collect(|&x, &y| f(x, y)))
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, name: &'static str, value: Array2<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Array2<f64>, requires_grad: bool) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("leaf".into()));
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape_of(&self.nodes[v.0].value)
    }

    /// The single entry of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        match self.shape(v) {
            (1, 1) => Ok(self.value(v)[[0, 0]]),
            s => Err(Error::Shape {
                op: "scalar",
                lhs: s,
                rhs: (1, 1),
            }),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let v = self.value(a).dot(self.value(b));
        self.push("matmul", v, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = binary_map("add", self.value(a), self.value(b), |x, y| x + y)?;
        self.push("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = binary_map("sub", self.value(a), self.value(b), |x, y| x - y)?;
        self.push("sub", v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = binary_map("mul", self.value(a), self.value(b), |x, y| x * y)?;
        self.push("mul", v, Op::Mul(a, b), &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = binary_map("div", self.value(a), self.value(b), |x, y| x / y)?;
        self.push("div", v, Op::Div(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let v = self.value(a) * k;
        self.push("scale", v, Op::Scale(a, k), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        let v = self.value(a) + k;
        self.push("add_scalar", v, Op::AddScalar(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_cols"))?;
        let rows = self.shape(*first).0;
        for p in parts {
            if self.shape(*p).0 != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(*first),
                    rhs: self.shape(*p),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("checked rows");
        self.push("concat_cols", v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_rows"))?;
        let cols = self.shape(*first).1;
        for p in parts {
            if self.shape(*p).1 != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    lhs: self.shape(*first),
                    rhs: self.shape(*p),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("checked cols");
        self.push("concat_rows", v, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a);
        if start > end || end > s.1 {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: s,
                rhs: (start, end),
            });
        }
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push("slice_cols", v, Op::SliceCols(a, start), &[a])
    }

    /// Row `k` of the output is row `idx[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &Arc<[usize]>) -> Result<Var> {
        let s = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= s.0) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: s,
                rhs: (bad, 0),
            });
        }
        let src = self.value(a);
        let mut v = Array2::zeros((idx.len(), s.1));
        for (k, &i) in idx.iter().enumerate() {
            v.row_mut(k).assign(&src.row(i));
        }
        self.push("gather_rows", v, Op::GatherRows(a, idx.clone()), &[a])
    }

    fn check_segments(&self, op: &'static str, a: Var, seg: &[usize], n: usize) -> Result<()> {
        let s = self.shape(a);
        if seg.len() != s.0 || seg.iter().any(|&g| g >= n) {
            return Err(Error::Shape {
                op,
                lhs: s,
                rhs: (seg.len(), n),
            });
        }
        Ok(())
    }

    /// Output row `g` is the sum of rows `k` with `seg[k] == g`; `n` output rows.
    pub fn segment_sum(&mut self, a: Var, seg: &Arc<[usize]>, n: usize) -> Result<Var> {
        self.check_segments("segment_sum", a, seg, n)?;
        let src = self.value(a);
        let mut v = Array2::zeros((n, src.ncols()));
        for (k, &g) in seg.iter().enumerate() {
            let mut row = v.row_mut(g);
            row += &src.row(k);
        }
        self.push("segment_sum", v, Op::SegmentSum(a, seg.clone()), &[a])
    }

    /// Column-wise softmax within each segment (rows sharing `seg[k]`).
    pub fn segment_softmax(&mut self, a: Var, seg: &Arc<[usize]>, n: usize) -> Result<Var> {
        self.check_segments("segment_softmax", a, seg, n)?;
        let src = self.value(a);
        let c = src.ncols();
        let mut max = Array2::from_elem((n, c), f64::NEG_INFINITY);
        for (k, &g) in seg.iter().enumerate() {
            for j in 0..c {
                max[[g, j]] = max[[g, j]].max(src[[k, j]]);
            }
        }
        let mut v = Array2::zeros(src.raw_dim());
        let mut denom = Array2::<f64>::zeros((n, c));
        for (k, &g) in seg.iter().enumerate() {
            for j in 0..c {
                let e = (src[[k, j]] - max[[g, j]]).exp();
                v[[k, j]] = e;
                denom[[g, j]] += e;
            }
        }
        for (k, &g) in seg.iter().enumerate() {
            for j in 0..c {
                v[[k, j]] /= denom[[g, j]];
            }
        }
        self.push("segment_softmax", v, Op::SegmentSoftmax(a, seg.clone()), &[a])
    }

    /// Softmax along `axis` (0: down columns, 1: across rows).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = match axis {
            1 => softmax_rows(self.value(a)),
            0 => softmax_rows(&self.value(a).t().to_owned()).t().to_owned(),
            _ => return Err(Error::invalid(format!("softmax axis {axis}"))),
        };
        self.push("softmax", v, Op::Softmax(a, axis), &[a])
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        self.push("log_softmax", v, Op::LogSoftmax(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", v, Op::LeakyRelu(a, slope), &[a])
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push("elu", v, Op::Elu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mapv(f64::exp);
        self.push("exp", v, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mapv(f64::ln);
        self.push("log", v, Op::Log(a), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mapv(f64::sqrt);
        self.push("sqrt", v, Op::Sqrt(a), &[a])
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        let v = self.value(a).mapv(|x| x.powf(p));
        self.push("powf", v, Op::Powf(a, p), &[a])
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Result<Var> {
        let v = self.value(a).mapv(|x| x.max(lo));
        self.push("clamp_min", v, Op::ClampMin(a, lo), &[a])
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push("sum", v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::Empty("mean of empty tensor"));
        }
        let v = Array2::from_elem((1, 1), self.value(a).sum() / n as f64);
        self.push("mean", v, Op::Mean(a), &[a])
    }

    /// Sum along `axis`, keeping it with length 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        if axis > 1 {
            return Err(Error::invalid(format!("sum axis {axis}")));
        }
        let v = self.value(a).sum_axis(Axis(axis)).insert_axis(Axis(axis));
        self.push("sum_axis", v, Op::SumAxis(a), &[a])
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a);
        let n = if axis == 0 { s.0 } else { s.1 };
        if n == 0 {
            return Err(Error::Empty("mean_axis over empty axis"));
        }
        let summed = self.sum_axis(a, axis)?;
        self.scale(summed, 1.0 / n as f64)
    }

    /// Column vector with entry `k = a[k, cols[k]]`.
    pub fn pick(&mut self, a: Var, cols: &Arc<[usize]>) -> Result<Var> {
        let s = self.shape(a);
        if cols.len() != s.0 || cols.iter().any(|&c| c >= s.1) {
            return Err(Error::Shape {
                op: "pick",
                lhs: s,
                rhs: (cols.len(), 1),
            });
        }
        let src = self.value(a);
        let v = Array2::from_shape_fn((s.0, 1), |(k, _)| src[[k, cols[k]]]);
        self.push("pick", v, Op::Pick(a, cols.clone()), &[a])
    }

    /// Element-wise product with a fixed mask. With an inverted-dropout mask
    /// (entries `0` or `1/(1−p)`) this is dropout.
    pub fn dropout(&mut self, a: Var, mask: &Arc<Array2<f64>>) -> Result<Var> {
        let s = self.shape(a);
        if shape_of(mask) != s {
            return Err(Error::Shape {
                op: "dropout",
                lhs: s,
                rhs: shape_of(mask),
            });
        }
        let v = self.value(a) * mask.as_ref();
        self.push("dropout", v, Op::MaskMul(a, mask.clone()), &[a])
    }

    /// Per-column standardization over rows followed by `γ · x̂ + β`.
    pub fn graph_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x);
        for p in [gamma, beta] {
            if self.shape(p) != (1, s.1) {
                return Err(Error::Shape {
                    op: "graph_norm",
                    lhs: s,
                    rhs: self.shape(p),
                });
            }
        }
        let xv = self.value(x);
        let mu = xv.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        let centered = xv - &mu;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = &centered * &inv_std;
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            "graph_norm",
            out,
            Op::GraphNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Each row divided by `sqrt(‖row‖² + eps)`.
    pub fn row_l2_normalize(&mut self, a: Var, eps: f64) -> Result<Var> {
        let src = self.value(a);
        let norms = src
            .map_axis(Axis(1), |r| (r.dot(&r) + eps).sqrt())
            .insert_axis(Axis(1));
        let v = src / &norms;
        self.push("row_l2_normalize", v, Op::RowL2Normalize(a, norms), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).t().to_owned();
        self.push("transpose", v, Op::Transpose(a), &[a])
    }

    /// Reverse pass from a 1×1 `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let s = self.shape(loss);
        if s != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: s,
                rhs: (1, 1),
            });
        }
        if !self.value(loss)[[0, 0]].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of node {i}")));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn send(&self, grads: &mut [Option<Array2<f64>>], to: Var, g: Array2<f64>) {
        if self.nodes[to.0].requires_grad {
            accumulate(&mut grads[to.0], g);
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    self.send(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.needs(*b) {
                    self.send(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                self.send(grads, *a, reduce_to(g, self.shape(*a)));
                self.send(grads, *b, reduce_to(g, self.shape(*b)));
            }
            Op::Sub(a, b) => {
                self.send(grads, *a, reduce_to(g, self.shape(*a)));
                self.send(grads, *b, -reduce_to(g, self.shape(*b)));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    self.send(grads, *a, reduce_to(&(g * bv), shape_of(av)));
                }
                if self.needs(*b) {
                    self.send(grads, *b, reduce_to(&(g * av), shape_of(bv)));
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                if self.needs(*a) {
                    self.send(grads, *a, reduce_to(&(g / bv), self.shape(*a)));
                }
                if self.needs(*b) {
                    let gb = -(g * out) / bv;
                    self.send(grads, *b, reduce_to(&gb, shape_of(bv)));
                }
            }
            Op::Scale(a, k) => self.send(grads, *a, g * *k),
            Op::AddScalar(a) => self.send(grads, *a, g.clone()),
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    self.send(grads, *p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let h = self.shape(*p).0;
                    self.send(grads, *p, g.slice(s![start..start + h, ..]).to_owned());
                    start += h;
                }
            }
            Op::SliceCols(a, start) => {
                let mut ga = Array2::zeros(self.shape(*a));
                ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                self.send(grads, *a, ga);
            }
            Op::GatherRows(a, idx) => {
                let mut ga = Array2::zeros(self.shape(*a));
                for (k, &i) in idx.iter().enumerate() {
                    let mut row = ga.row_mut(i);
                    row += &g.row(k);
                }
                self.send(grads, *a, ga);
            }
            Op::SegmentSum(a, seg) => {
                let mut ga = Array2::zeros(self.shape(*a));
                for (k, &s) in seg.iter().enumerate() {
                    ga.row_mut(k).assign(&g.row(s));
                }
                self.send(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, seg) => {
                let n = seg.iter().copied().max().map_or(0, |m| m + 1);
                let c = out.ncols();
                let mut dot = Array2::<f64>::zeros((n, c));
                for (k, &s) in seg.iter().enumerate() {
                    for j in 0..c {
                        dot[[s, j]] += g[[k, j]] * out[[k, j]];
                    }
                }
                let ga = Array2::from_shape_fn(out.raw_dim(), |(k, j)| out[[k, j]] * (g[[k, j]] - dot[[seg[k], j]]));
                self.send(grads, *a, ga);
            }
            Op::Softmax(a, axis) => {
                let dot = (g * out).sum_axis(Axis(*axis)).insert_axis(Axis(*axis));
                self.send(grads, *a, out * &(g - &dot));
            }
            Op::LogSoftmax(a) => {
                let gsum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                let soft = out.mapv(f64::exp);
                self.send(grads, *a, g - &(soft * &gsum));
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let ga = Zip::from(g).and(x).map_collect(|&g, &x| if x > 0.0 { g } else { g * slope });
                self.send(grads, *a, ga);
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                let ga = Zip::from(g)
                    .and(x)
                    .and(out)
                    .map_collect(|&g, &x, &y| if x > 0.0 { g } else { g * (y + 1.0) });
                self.send(grads, *a, ga);
            }
            Op::Exp(a) => self.send(grads, *a, g * out),
            Op::Log(a) => self.send(grads, *a, g / self.value(*a)),
            Op::Sqrt(a) => self.send(grads, *a, Zip::from(g).and(out).map_collect(|&g, &y| 0.5 * g / y)),
            Op::Powf(a, p) => {
                let x = self.value(*a);
                let ga = Zip::from(g).and(x).map_collect(|&g, &x| g * p * x.powf(p - 1.0));
                self.send(grads, *a, ga);
            }
            Op::ClampMin(a, lo) => {
                let x = self.value(*a);
                let ga = Zip::from(g).and(x).map_collect(|&g, &x| if x > *lo { g } else { 0.0 });
                self.send(grads, *a, ga);
            }
            Op::Sum(a) => self.send(grads, *a, Array2::from_elem(self.shape(*a), g[[0, 0]])),
            Op::Mean(a) => {
                let s = self.shape(*a);
                self.send(grads, *a, Array2::from_elem(s, g[[0, 0]] / (s.0 * s.1) as f64));
            }
            Op::SumAxis(a) => {
                let s = self.shape(*a);
                self.send(grads, *a, g.broadcast(s).expect("kept axis").to_owned());
            }
            Op::Pick(a, cols) => {
                let mut ga = Array2::zeros(self.shape(*a));
                for (k, &c) in cols.iter().enumerate() {
                    ga[[k, c]] = g[[k, 0]];
                }
                self.send(grads, *a, ga);
            }
            Op::MaskMul(a, mask) => self.send(grads, *a, g * mask.as_ref()),
            Op::GraphNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                if self.needs(*beta) {
                    self.send(grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.needs(*gamma) {
                    self.send(grads, *gamma, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.needs(*x) {
                    let n = xhat.nrows() as f64;
                    let dxhat = g * self.value(*gamma);
                    let sum_d = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let sum_dx = (&dxhat * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gx = (&dxhat * n - &sum_d - &(xhat * &sum_dx)) * inv_std / n;
                    self.send(grads, *x, gx);
                }
            }
            Op::RowL2Normalize(a, norms) => {
                let dot = (g * out).sum_axis(Axis(1)).insert_axis(Axis(1));
                let ga = (g - &(out * &dot)) / norms;
                self.send(grads, *a, ga);
            }
            Op::Transpose(a) => self.send(grads, *a, g.t().to_owned()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(array![[0.0, 0.0, 0.0]]).unwrap();
        let y = t.softmax(x, 1).unwrap();
        for v in t.value(y) {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn segment_sum_by_definition() {
        let mut t = Tape::new();
        let x = t.constant(array![[1.0], [2.0], [3.0]]).unwrap();
        let seg: Arc<[usize]> = Arc::from(vec![0, 0, 1]);
        let y = t.segment_sum(x, &seg, 2).unwrap();
        assert_eq!(t.value(y), &array![[3.0], [3.0]]);
    }

    #[test]
    fn leaky_relu_negative_input() {
        let mut t = Tape::new();
        let x = t.constant(array![[-2.0]]).unwrap();
        let y = t.leaky_relu(x, 0.2).unwrap();
        assert_abs_diff_eq!(t.value(y)[[0, 0]], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn square_derivative_at_three() {
        let mut t = Tape::new();
        let x = t.param(array![[3.0]]).unwrap();
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap()[[0, 0]], 6.0);
    }

    #[test]
    fn softmax_log_softmax_gradient_rows_sum_to_zero() {
        let mut t = Tape::new();
        let x = t.param(array![[0.3, -1.2, 2.0], [1.0, 0.5, -0.7]]).unwrap();
        let p = t.softmax(x, 1).unwrap();
        let lp = t.log_softmax(p).unwrap();
        let w = t.constant(array![[1.0, 2.0, -3.0], [0.5, 0.1, 4.0]]).unwrap();
        let prod = t.mul(lp, w).unwrap();
        let loss = t.sum(prod).unwrap();
        let g = t.backward(loss).unwrap();
        for row in g.get(x).unwrap().rows() {
            assert_abs_diff_eq!(row.sum(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn shape_errors_report_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Array2::zeros((2, 3))).unwrap();
        let b = t.constant(Array2::zeros((2, 3))).unwrap();
        match t.matmul(a, b) {
            Err(Error::Shape { lhs, rhs, .. }) => assert_eq!((lhs, rhs), ((2, 3), (2, 3))),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_is_trapped() {
        let mut t = Tape::new();
        let x = t.constant(array![[0.0]]).unwrap();
        assert!(matches!(t.log(x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(array![[1.0, 2.0]]).unwrap();
        assert!(t.backward(x).is_err());
    }
}
