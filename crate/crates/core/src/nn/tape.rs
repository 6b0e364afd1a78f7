//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] is an append-only arena of nodes. Forward values are computed
//! eagerly as ops are recorded; [`Tape::backward`] walks the arena in reverse
//! and accumulates gradients for every node. All arithmetic is double
//! precision.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch { op: &'static str, expected: String, got: String },
    #[error("{op}: index {index} out of range {len}")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("backward root must be a scalar, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add { a: NodeId, b: NodeId },
    AddRow { a: NodeId, row: NodeId },
    Mul { a: NodeId, b: NodeId },
    MulRow { a: NodeId, row: NodeId },
    Scale { a: NodeId, k: f64 },
    Gelu { a: NodeId },
    LayerNorm { a: NodeId, eps: f64 },
    SoftmaxRows { a: NodeId },
    LogSoftmaxRows { a: NodeId },
    GatherRows { a: NodeId, indices: Vec<usize> },
    ConcatCols { parts: Vec<NodeId> },
    SliceCols { a: NodeId, start: usize, end: usize },
    Pick { a: NodeId, indices: Vec<usize> },
    MeanAll { a: NodeId },
    SumAll { a: NodeId },
    DotSumRows { a: NodeId, b: NodeId },
    Dropout { a: NodeId, mask: Vec<f64> },
    Reshape { a: NodeId },
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    op: Op,
}

/// Append-only computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

fn matmul_raw(
    a: &[f64],
    (ra, ca): (usize, usize),
    ta: bool,
    b: &[f64],
    (rb, cb): (usize, usize),
    tb: bool,
) -> (Vec<f64>, usize, usize) {
    let (m, k1) = if ta { (ca, ra) } else { (ra, ca) };
    let (k2, n) = if tb { (cb, rb) } else { (rb, cb) };
    debug_assert_eq!(k1, k2);
    let k = k1;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = if ta { a[p * ca + i] } else { a[i * ca + p] };
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            if tb {
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o += av * b[j * cb + p];
                }
            } else {
                let b_row = &b[p * cb..(p + 1) * cb];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
    }
    (out, m, n)
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

const GELU_C: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    let u = (2.0 / std::f64::consts::PI).sqrt() * (x + GELU_C * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let s = (2.0 / std::f64::consts::PI).sqrt();
    let u = s * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * s * (1.0 + 3.0 * GELU_C * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(values.len(), rows * cols);
        self.nodes.push(Node { rows, cols, values, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf node holding externally supplied values (parameters or inputs).
    pub fn leaf(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> NodeId {
        self.push(rows, cols, values, Op::Leaf)
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    /// Gradient of the most recent [`Tape::backward`] root with respect to
    /// this node.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }

    fn shapes_equal(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), NnError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (ar, ac) != (br, bc) {
            return Err(NnError::ShapeMismatch {
                op,
                expected: format!("{ar}x{ac}"),
                got: format!("{br}x{bc}"),
            });
        }
        Ok(())
    }

    /// `op_a(A) * op_b(B)` where the flags transpose their operand.
    pub fn matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId, NnError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let inner_a = if ta { ar } else { ac };
        let inner_b = if tb { bc } else { br };
        if inner_a != inner_b {
            return Err(NnError::ShapeMismatch {
                op: "matmul",
                expected: format!("inner {inner_a}"),
                got: format!("inner {inner_b}"),
            });
        }
        let (vals, m, n) = matmul_raw(
            &self.nodes[a.0].values,
            (ar, ac),
            ta,
            &self.nodes[b.0].values,
            (br, bc),
            tb,
        );
        Ok(self.push(m, n, vals, Op::Matmul { a, b, ta, tb }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.shapes_equal("add", a, b)?;
        let (r, c) = self.shape(a);
        let vals: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(r, c, vals, Op::Add { a, b }))
    }

    /// `A + row` with the `1 x cols` row broadcast over every row of `A`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, NnError> {
        let (r, c) = self.shape(a);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != c {
            return Err(NnError::ShapeMismatch {
                op: "add_row",
                expected: format!("1x{c}"),
                got: format!("{rr}x{rc}"),
            });
        }
        let rv = self.nodes[row.0].values.clone();
        let vals: Vec<f64> = self.nodes[a.0]
            .values
            .chunks(c)
            .flat_map(|chunk| chunk.iter().zip(&rv).map(|(&x, &y)| x + y))
            .collect();
        Ok(self.push(r, c, vals, Op::AddRow { a, row }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.shapes_equal("mul", a, b)?;
        let (r, c) = self.shape(a);
        let vals: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(r, c, vals, Op::Mul { a, b }))
    }

    /// `A * row` elementwise with broadcast, as in a layernorm gain.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, NnError> {
        let (r, c) = self.shape(a);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != c {
            return Err(NnError::ShapeMismatch {
                op: "mul_row",
                expected: format!("1x{c}"),
                got: format!("{rr}x{rc}"),
            });
        }
        let rv = self.nodes[row.0].values.clone();
        let vals: Vec<f64> = self.nodes[a.0]
            .values
            .chunks(c)
            .flat_map(|chunk| chunk.iter().zip(&rv).map(|(&x, &y)| x * y))
            .collect();
        Ok(self.push(r, c, vals, Op::MulRow { a, row }))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let vals: Vec<f64> = self.nodes[a.0].values.iter().map(|&x| x * k).collect();
        self.push(r, c, vals, Op::Scale { a, k })
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let vals: Vec<f64> = self.nodes[a.0].values.iter().map(|&x| gelu(x)).collect();
        self.push(r, c, vals, Op::Gelu { a })
    }

    /// Row-wise layer normalization without affine terms.
    pub fn layernorm_rows(&mut self, a: NodeId, eps: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let mut vals = Vec::with_capacity(r * c);
        for row in self.nodes[a.0].values.chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            vals.extend(row.iter().map(|&x| (x - mean) * rstd));
        }
        self.push(r, c, vals, Op::LayerNorm { a, eps })
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let mut vals = Vec::with_capacity(r * c);
        for row in self.nodes[a.0].values.chunks(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            vals.extend(exps.iter().map(|&e| e / z));
        }
        self.push(r, c, vals, Op::SoftmaxRows { a })
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let mut vals = Vec::with_capacity(r * c);
        for row in self.nodes[a.0].values.chunks(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            vals.extend(row.iter().map(|&x| x - lse));
        }
        self.push(r, c, vals, Op::LogSoftmaxRows { a })
    }

    /// Rows of `a` selected by index, with repetition allowed (embedding
    /// lookup).
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, NnError> {
        let (r, c) = self.shape(a);
        for &i in indices {
            if i >= r {
                return Err(NnError::IndexOutOfRange { op: "gather_rows", index: i, len: r });
            }
        }
        let src = &self.nodes[a.0].values;
        let mut vals = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            vals.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        Ok(self.push(indices.len(), c, vals, Op::GatherRows { a, indices: indices.to_vec() }))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        let (r, _) = self.shape(parts[0]);
        let mut total_c = 0;
        for &p in parts {
            let (pr, pc) = self.shape(p);
            if pr != r {
                return Err(NnError::ShapeMismatch {
                    op: "concat_cols",
                    expected: format!("{r} rows"),
                    got: format!("{pr} rows"),
                });
            }
            total_c += pc;
        }
        let mut vals = Vec::with_capacity(r * total_c);
        for i in 0..r {
            for &p in parts {
                let (_, pc) = self.shape(p);
                vals.extend_from_slice(&self.nodes[p.0].values[i * pc..(i + 1) * pc]);
            }
        }
        Ok(self.push(r, total_c, vals, Op::ConcatCols { parts: parts.to_vec() }))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, NnError> {
        let (r, c) = self.shape(a);
        if start >= end || end > c {
            return Err(NnError::IndexOutOfRange { op: "slice_cols", index: end, len: c });
        }
        let w = end - start;
        let mut vals = Vec::with_capacity(r * w);
        for row in self.nodes[a.0].values.chunks(c) {
            vals.extend_from_slice(&row[start..end]);
        }
        Ok(self.push(r, w, vals, Op::SliceCols { a, start, end }))
    }

    /// Column vector of `a[i, indices[i]]`.
    pub fn pick(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, NnError> {
        let (r, c) = self.shape(a);
        if indices.len() != r {
            return Err(NnError::ShapeMismatch {
                op: "pick",
                expected: format!("{r} indices"),
                got: format!("{}", indices.len()),
            });
        }
        for &i in indices {
            if i >= c {
                return Err(NnError::IndexOutOfRange { op: "pick", index: i, len: c });
            }
        }
        let vals: Vec<f64> = indices
            .iter()
            .enumerate()
            .map(|(i, &j)| self.nodes[a.0].values[i * c + j])
            .collect();
        Ok(self.push(r, 1, vals, Op::Pick { a, indices: indices.to_vec() }))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a.0].values.len();
        let v = self.nodes[a.0].values.iter().sum::<f64>() / n as f64;
        self.push(1, 1, vec![v], Op::MeanAll { a })
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].values.iter().sum::<f64>();
        self.push(1, 1, vec![v], Op::SumAll { a })
    }

    /// Scalar `sum(a * b)` without materializing the product.
    pub fn dot_sum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.shapes_equal("dot_sum", a, b)?;
        let v = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x * y)
            .sum();
        Ok(self.push(1, 1, vec![v], Op::DotSumRows { a, b }))
    }

    /// Inverted dropout; a no-op when `train` is false or `p` is zero.
    pub fn dropout<R: Rng>(&mut self, a: NodeId, p: f64, train: bool, rng: &mut R) -> NodeId {
        let (r, c) = self.shape(a);
        if !train || p <= 0.0 {
            let vals = self.nodes[a.0].values.clone();
            return self.push(r, c, vals, Op::Reshape { a });
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 / keep })
            .collect();
        let vals: Vec<f64> =
            self.nodes[a.0].values.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        self.push(r, c, vals, Op::Dropout { a, mask })
    }

    /// Same data viewed under a different shape with equal element count.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId, NnError> {
        let (r, c) = self.shape(a);
        if r * c != rows * cols {
            return Err(NnError::ShapeMismatch {
                op: "reshape",
                expected: format!("{} elements", r * c),
                got: format!("{} elements", rows * cols),
            });
        }
        let vals = self.nodes[a.0].values.clone();
        Ok(self.push(rows, cols, vals, Op::Reshape { a }))
    }

    /// Check a node's forward values for NaN/inf.
    pub fn assert_finite(&self, id: NodeId, op: &'static str) -> Result<(), NnError> {
        if self.nodes[id.0].values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(NnError::NonFinite { op })
        }
    }

    /// Reverse pass seeding the scalar `root` with gradient 1.
    pub fn backward(&mut self, root: NodeId) -> Result<(), NnError> {
        let (rr, rc) = self.shape(root);
        if (rr, rc) != (1, 1) {
            return Err(NnError::NonScalarRoot { rows: rr, cols: rc });
        }
        self.grads = self.nodes.iter().map(|n| vec![0.0; n.values.len()]).collect();
        self.grads[root.0][0] = 1.0;
        for idx in (0..=root.0).rev() {
            if self.grads[idx].iter().all(|&g| g == 0.0) {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            let g = std::mem::take(&mut self.grads[idx]);
            match op {
                Op::Leaf => {}
                Op::Matmul { a, b, ta, tb } => {
                    let (m, n) = (self.nodes[idx].rows, self.nodes[idx].cols);
                    let a_shape = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let b_shape = (self.nodes[b.0].rows, self.nodes[b.0].cols);
                    let (da_eff, dm, dk) =
                        matmul_raw(&g, (m, n), false, &self.nodes[b.0].values, b_shape, !tb);
                    let da = if ta { transpose(&da_eff, dm, dk) } else { da_eff };
                    for (dst, src) in self.grads[a.0].iter_mut().zip(&da) {
                        *dst += src;
                    }
                    let (db_eff, dk2, dn) =
                        matmul_raw(&self.nodes[a.0].values, a_shape, !ta, &g, (m, n), false);
                    let db = if tb { transpose(&db_eff, dk2, dn) } else { db_eff };
                    for (dst, src) in self.grads[b.0].iter_mut().zip(&db) {
                        *dst += src;
                    }
                }
                Op::Add { a, b } => {
                    for (dst, src) in self.grads[a.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                    for (dst, src) in self.grads[b.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::AddRow { a, row } => {
                    let c = self.nodes[idx].cols;
                    for (dst, src) in self.grads[a.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                    for (i, src) in g.iter().enumerate() {
                        self.grads[row.0][i % c] += src;
                    }
                }
                Op::Mul { a, b } => {
                    for i in 0..g.len() {
                        self.grads[a.0][i] += g[i] * self.nodes[b.0].values[i];
                        self.grads[b.0][i] += g[i] * self.nodes[a.0].values[i];
                    }
                }
                Op::MulRow { a, row } => {
                    let c = self.nodes[idx].cols;
                    for (i, &src) in g.iter().enumerate() {
                        self.grads[a.0][i] += src * self.nodes[row.0].values[i % c];
                        self.grads[row.0][i % c] += src * self.nodes[a.0].values[i];
                    }
                }
                Op::Scale { a, k } => {
                    for (dst, src) in self.grads[a.0].iter_mut().zip(&g) {
                        *dst += src * k;
                    }
                }
                Op::Gelu { a } => {
                    for (i, &src) in g.iter().enumerate() {
                        self.grads[a.0][i] += src * gelu_grad(self.nodes[a.0].values[i]);
                    }
                }
                Op::LayerNorm { a, eps } => {
                    let c = self.nodes[idx].cols;
                    let cf = c as f64;
                    for (row_i, (g_row, y_row)) in
                        g.chunks(c).zip(self.nodes[idx].values.chunks(c)).enumerate()
                    {
                        let x_row = &self.nodes[a.0].values[row_i * c..(row_i + 1) * c];
                        let mean = x_row.iter().sum::<f64>() / cf;
                        let var =
                            x_row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / cf;
                        let rstd = 1.0 / (var + eps).sqrt();
                        let g_mean = g_row.iter().sum::<f64>() / cf;
                        let gy_mean =
                            g_row.iter().zip(y_row).map(|(&gv, &yv)| gv * yv).sum::<f64>() / cf;
                        for j in 0..c {
                            self.grads[a.0][row_i * c + j] +=
                                rstd * (g_row[j] - g_mean - y_row[j] * gy_mean);
                        }
                    }
                }
                Op::SoftmaxRows { a } => {
                    let c = self.nodes[idx].cols;
                    for (row_i, (g_row, y_row)) in
                        g.chunks(c).zip(self.nodes[idx].values.chunks(c)).enumerate()
                    {
                        let dot: f64 = g_row.iter().zip(y_row).map(|(&gv, &yv)| gv * yv).sum();
                        for j in 0..c {
                            self.grads[a.0][row_i * c + j] += y_row[j] * (g_row[j] - dot);
                        }
                    }
                }
                Op::LogSoftmaxRows { a } => {
                    let c = self.nodes[idx].cols;
                    for (row_i, (g_row, y_row)) in
                        g.chunks(c).zip(self.nodes[idx].values.chunks(c)).enumerate()
                    {
                        let g_sum: f64 = g_row.iter().sum();
                        for j in 0..c {
                            // softmax = exp(log-softmax)
                            self.grads[a.0][row_i * c + j] +=
                                g_row[j] - y_row[j].exp() * g_sum;
                        }
                    }
                }
                Op::GatherRows { a, indices } => {
                    let c = self.nodes[idx].cols;
                    for (out_i, &src_i) in indices.iter().enumerate() {
                        for j in 0..c {
                            self.grads[a.0][src_i * c + j] += g[out_i * c + j];
                        }
                    }
                }
                Op::ConcatCols { parts } => {
                    let total_c = self.nodes[idx].cols;
                    let rows = self.nodes[idx].rows;
                    for i in 0..rows {
                        let mut offset = 0;
                        for &p in &parts {
                            let pc = self.nodes[p.0].cols;
                            for j in 0..pc {
                                self.grads[p.0][i * pc + j] += g[i * total_c + offset + j];
                            }
                            offset += pc;
                        }
                    }
                }
                Op::SliceCols { a, start, end } => {
                    let c = self.nodes[a.0].cols;
                    let w = end - start;
                    for i in 0..self.nodes[idx].rows {
                        for j in 0..w {
                            self.grads[a.0][i * c + start + j] += g[i * w + j];
                        }
                    }
                }
                Op::Pick { a, indices } => {
                    let c = self.nodes[a.0].cols;
                    for (i, &j) in indices.iter().enumerate() {
                        self.grads[a.0][i * c + j] += g[i];
                    }
                }
                Op::MeanAll { a } => {
                    let n = self.grads[a.0].len() as f64;
                    for dst in self.grads[a.0].iter_mut() {
                        *dst += g[0] / n;
                    }
                }
                Op::SumAll { a } => {
                    for dst in self.grads[a.0].iter_mut() {
                        *dst += g[0];
                    }
                }
                Op::DotSumRows { a, b } => {
                    for i in 0..self.grads[a.0].len() {
                        self.grads[a.0][i] += g[0] * self.nodes[b.0].values[i];
                        self.grads[b.0][i] += g[0] * self.nodes[a.0].values[i];
                    }
                }
                Op::Dropout { a, mask } => {
                    for (i, &src) in g.iter().enumerate() {
                        self.grads[a.0][i] += src * mask[i];
                    }
                }
                Op::Reshape { a } => {
                    for (dst, src) in self.grads[a.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
            }
            self.grads[idx] = g;
        }
        Ok(())
    }
}
