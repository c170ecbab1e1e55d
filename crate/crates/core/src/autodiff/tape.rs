use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use super::{gemm_acc, gemm_nt_acc, gemm_tn_acc, AdError, Result, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.idx
    }
}

/// Row-to-segment assignment used by the segment reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    ids: Arc<[usize]>,
    count: usize,
}

impl Segments {
    pub fn new(ids: Vec<usize>, count: usize) -> Result<Self> {
        if let Some(&id) = ids.iter().find(|&&id| id >= count) {
            return Err(AdError::InvalidSegment { id, count });
        }
        Ok(Self { ids: ids.into(), count })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    MulRow(usize, usize),
    ScalarMul(usize, f64),
    Concat { inputs: Vec<usize>, axis: usize },
    LeakyRelu(usize, f64),
    Elu(usize),
    Log(usize),
    SegmentSoftmax(usize, Segments),
    SegmentSum(usize, Segments),
    Gather(usize, Arc<[usize]>),
    SumAll(usize),
    MeanAll(usize),
    SumRows(usize),
    MeanRows(usize),
    Dropout(usize, Vec<f64>),
    LogSoftmaxRows(usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Leaf, true)
    }

    /// Records a non-trainable leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        self.check(v)?;
        Ok(&self.nodes[v.idx].value)
    }

    pub fn requires_grad(&self, v: Var) -> Result<bool> {
        self.check(v)?;
        Ok(self.nodes[v.idx].requires_grad)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(AdError::DetachedTensor);
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        let t = self.value(v)?;
        Ok((t.rows(), t.cols()))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.idx].requires_grad)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = self.value(a)?;
        let values = t.values().iter().map(|&x| f(x)).collect();
        let out = Tensor::matrix(t.rows(), t.cols(), values)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, op, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return Err(AdError::ShapeMismatch { op: "matmul", left: vec![m, k], right: vec![k2, n] });
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.nodes[a.idx].value.values(), self.nodes[b.idx].value.values(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a.idx, b.idx), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let da = self.dims(a)?;
        let db = self.dims(b)?;
        if da != db {
            return Err(AdError::ShapeMismatch { op, left: vec![da.0, da.1], right: vec![db.0, db.1] });
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.same_shape("add", a, b)?;
        let values = zip_map(&self.nodes[a.idx].value, &self.nodes[b.idx].value, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, values)?, Op::Add(a.idx, b.idx), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.same_shape("mul", a, b)?;
        let values = zip_map(&self.nodes[a.idx].value, &self.nodes[b.idx].value, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, values)?, Op::Mul(a.idx, b.idx), rg))
    }

    fn row_broadcast(&self, op: &'static str, a: Var, row: Var) -> Result<(usize, usize)> {
        let (m, n) = self.dims(a)?;
        let (r, c) = self.dims(row)?;
        if r != 1 || c != n {
            return Err(AdError::ShapeMismatch { op, left: vec![m, n], right: vec![r, c] });
        }
        Ok((m, n))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.row_broadcast("add_row", a, row)?;
        let av = self.nodes[a.idx].value.values();
        let rv = self.nodes[row.idx].value.values();
        let values = av.iter().enumerate().map(|(i, x)| x + rv[i % n]).collect();
        let rg = self.rg(&[a, row]);
        Ok(self.push(Tensor::matrix(m, n, values)?, Op::AddRow(a.idx, row.idx), rg))
    }

    /// Multiplies every row of `a` elementwise by a `1×n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.row_broadcast("mul_row", a, row)?;
        let av = self.nodes[a.idx].value.values();
        let rv = self.nodes[row.idx].value.values();
        let values = av.iter().enumerate().map(|(i, x)| x * rv[i % n]).collect();
        let rg = self.rg(&[a, row]);
        Ok(self.push(Tensor::matrix(m, n, values)?, Op::MulRow(a.idx, row.idx), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::ScalarMul(a.idx, c), |x| c * x)
    }

    /// Concatenates along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() || axis > 1 {
            return Err(AdError::InvalidArgument(format!("concat of {} inputs on axis {axis}", inputs.len())));
        }
        let dims: Vec<(usize, usize)> = inputs.iter().map(|&v| self.dims(v)).collect::<Result<_>>()?;
        let (r0, c0) = dims[0];
        for &(r, c) in &dims[1..] {
            let ok = if axis == 0 { c == c0 } else { r == r0 };
            if !ok {
                return Err(AdError::ShapeMismatch { op: "concat", left: vec![r0, c0], right: vec![r, c] });
            }
        }
        let out = if axis == 0 {
            let rows: usize = dims.iter().map(|d| d.0).sum();
            let mut values = Vec::with_capacity(rows * c0);
            for v in inputs {
                values.extend_from_slice(self.nodes[v.idx].value.values());
            }
            Tensor::matrix(rows, c0, values)?
        } else {
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut values = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for (v, &(_, c)) in inputs.iter().zip(&dims) {
                    values.extend_from_slice(&self.nodes[v.idx].value.values()[i * c..(i + 1) * c]);
                }
            }
            Tensor::matrix(r0, cols, values)?
        };
        let rg = self.rg(inputs);
        Ok(self.push(out, Op::Concat { inputs: inputs.iter().map(|v| v.idx).collect(), axis }, rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary(a, Op::LeakyRelu(a.idx, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    /// ELU with unit scale.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Elu(a.idx), |x| if x > 0.0 { x } else { x.exp_m1() })
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a)?.values().iter().find(|&&x| !(x > 0.0)) {
            return Err(AdError::InvalidArgument(format!("log of non-positive value {bad}")));
        }
        self.unary(a, Op::Log(a.idx), f64::ln)
    }

    /// Softmax of each column within each segment of rows.
    pub fn segment_softmax(&mut self, a: Var, segments: &Segments) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        if segments.len() != m {
            return Err(AdError::ShapeMismatch { op: "segment_softmax", left: vec![m, n], right: vec![segments.len()] });
        }
        let x = self.nodes[a.idx].value.values();
        let s = segments.count();
        let mut max = vec![f64::NEG_INFINITY; s * n];
        for (i, &seg) in segments.ids().iter().enumerate() {
            for j in 0..n {
                let v = x[i * n + j];
                if v > max[seg * n + j] {
                    max[seg * n + j] = v;
                }
            }
        }
        let mut values = vec![0.0; m * n];
        let mut sum = vec![0.0; s * n];
        for (i, &seg) in segments.ids().iter().enumerate() {
            for j in 0..n {
                let e = (x[i * n + j] - max[seg * n + j]).exp();
                values[i * n + j] = e;
                sum[seg * n + j] += e;
            }
        }
        for (i, &seg) in segments.ids().iter().enumerate() {
            for j in 0..n {
                values[i * n + j] /= sum[seg * n + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(m, n, values)?, Op::SegmentSoftmax(a.idx, segments.clone()), rg))
    }

    /// Sums rows sharing a segment id; the output has one row per segment.
    pub fn segment_sum(&mut self, a: Var, segments: &Segments) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        if segments.len() != m {
            return Err(AdError::ShapeMismatch { op: "segment_sum", left: vec![m, n], right: vec![segments.len()] });
        }
        let x = self.nodes[a.idx].value.values();
        let mut values = vec![0.0; segments.count() * n];
        for (i, &seg) in segments.ids().iter().enumerate() {
            for j in 0..n {
                values[seg * n + j] += x[i * n + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(segments.count(), n, values)?, Op::SegmentSum(a.idx, segments.clone()), rg))
    }

    /// Selects rows of `a` by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, index: &Arc<[usize]>) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        if let Some(&bad) = index.iter().find(|&&i| i >= m) {
            return Err(AdError::InvalidSegment { id: bad, count: m });
        }
        if index.is_empty() {
            return Err(AdError::InvalidArgument("empty gather index".into()));
        }
        let x = self.nodes[a.idx].value.values();
        let mut values = Vec::with_capacity(index.len() * n);
        for &r in index.iter() {
            values.extend_from_slice(&x[r * n..(r + 1) * n]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(index.len(), n, values)?, Op::Gather(a.idx, index.clone()), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a)?.values().iter().sum();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::SumAll(a.idx), rg))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a)?;
        let s = t.values().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::MeanAll(a.idx), rg))
    }

    /// Column sums as a `1×n` row.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let x = self.nodes[a.idx].value.values();
        let mut values = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                values[j] += x[i * n + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::row(values), Op::SumRows(a.idx), rg))
    }

    /// Column means as a `1×n` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let x = self.nodes[a.idx].value.values();
        let mut values = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                values[j] += x[i * n + j];
            }
        }
        values.iter_mut().for_each(|v| *v /= m as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::row(values), Op::MeanRows(a.idx), rg))
    }

    /// Inverted dropout. Returns `a` itself when `train` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(AdError::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
        }
        self.check(a)?;
        if !train || p == 0.0 {
            return Ok(a);
        }
        let t = &self.nodes[a.idx].value;
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..t.len()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let values = t.values().iter().zip(&mask).map(|(x, k)| x * k).collect();
        let out = Tensor::matrix(t.rows(), t.cols(), values)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Dropout(a.idx, mask), rg))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let x = self.nodes[a.idx].value.values();
        let mut values = vec![0.0; m * n];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for j in 0..n {
                values[i * n + j] = row[j] - lse;
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(m, n, values)?, Op::LogSoftmaxRows(a.idx), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let lt = &self.nodes[loss.idx].value;
        if lt.len() != 1 {
            return Err(AdError::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.idx] = Some(vec![1.0]);
        for i in (0..=loss.idx).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads, shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect() })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        let (m, n) = (out.rows(), out.cols());
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.nodes[*a].value.values();
                let bv = self.nodes[*b].value.values();
                let k = self.nodes[*a].value.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    gemm_nt_acc(g, bv, ga, m, n, k);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gemm_tn_acc(av, g, gb, m, k, n);
                }
            }
            Op::Add(a, b) => {
                for x in [*a, *b] {
                    if let Some(gx) = self.slot(grads, x) {
                        gx.iter_mut().zip(g).for_each(|(o, v)| *o += v);
                    }
                }
            }
            Op::AddRow(a, r) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(o, v)| *o += v);
                }
                if let Some(gr) = self.slot(grads, *r) {
                    for (i, v) in g.iter().enumerate() {
                        gr[i % n] += v;
                    }
                }
            }
            Op::Mul(a, b) => {
                let av = self.nodes[*a].value.values();
                let bv = self.nodes[*b].value.values();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }
            Op::MulRow(a, r) => {
                let av = self.nodes[*a].value.values();
                let rv = self.nodes[*r].value.values();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * rv[i % n];
                    }
                }
                if let Some(gr) = self.slot(grads, *r) {
                    for i in 0..g.len() {
                        gr[i % n] += g[i] * av[i];
                    }
                }
            }
            Op::ScalarMul(a, c) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(o, v)| *o += c * v);
                }
            }
            Op::Concat { inputs, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &x in inputs {
                        let len = self.nodes[x].value.len();
                        if let Some(gx) = self.slot(grads, x) {
                            gx.iter_mut().zip(&g[offset..offset + len]).for_each(|(o, v)| *o += v);
                        }
                        offset += len;
                    }
                } else {
                    let mut col = 0;
                    for &x in inputs {
                        let c = self.nodes[x].value.cols();
                        if let Some(gx) = self.slot(grads, x) {
                            for i in 0..m {
                                for j in 0..c {
                                    gx[i * c + j] += g[i * n + col + j];
                                }
                            }
                        }
                        col += c;
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                let xv = self.nodes[*a].value.values();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += if xv[i] > 0.0 { g[i] } else { slope * g[i] };
                    }
                }
            }
            Op::Elu(a) => {
                let xv = self.nodes[*a].value.values();
                let yv = out.values();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += if xv[i] > 0.0 { g[i] } else { g[i] * (yv[i] + 1.0) };
                    }
                }
            }
            Op::Log(a) => {
                let xv = self.nodes[*a].value.values();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] / xv[i];
                    }
                }
            }
            Op::SegmentSoftmax(a, seg) => {
                let yv = out.values();
                if let Some(ga) = self.slot(grads, *a) {
                    let mut dot = vec![0.0; seg.count() * n];
                    for (i, &s) in seg.ids().iter().enumerate() {
                        for j in 0..n {
                            dot[s * n + j] += g[i * n + j] * yv[i * n + j];
                        }
                    }
                    for (i, &s) in seg.ids().iter().enumerate() {
                        for j in 0..n {
                            ga[i * n + j] += yv[i * n + j] * (g[i * n + j] - dot[s * n + j]);
                        }
                    }
                }
            }
            Op::SegmentSum(a, seg) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (i, &s) in seg.ids().iter().enumerate() {
                        for j in 0..n {
                            ga[i * n + j] += g[s * n + j];
                        }
                    }
                }
            }
            Op::Gather(a, index) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (r, &src) in index.iter().enumerate() {
                        for j in 0..n {
                            ga[src * n + j] += g[r * n + j];
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            Op::MeanAll(a) => {
                let len = self.nodes[*a].value.len() as f64;
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().for_each(|o| *o += g[0] / len);
                }
            }
            Op::SumRows(a) | Op::MeanRows(a) => {
                let rows = self.nodes[*a].value.rows();
                let scale = if matches!(node.op, Op::MeanRows(_)) { 1.0 / rows as f64 } else { 1.0 };
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..rows {
                        for j in 0..n {
                            ga[i * n + j] += scale * g[j];
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * mask[i];
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let yv = out.values();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..m {
                        let gs: f64 = g[i * n..(i + 1) * n].iter().sum();
                        for j in 0..n {
                            ga[i * n + j] += g[i * n + j] - yv[i * n + j].exp() * gs;
                        }
                    }
                }
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], idx: usize) -> Option<&'g mut [f64]> {
        if !self.nodes[idx].requires_grad {
            return None;
        }
        let len = self.nodes[idx].value.len();
        Some(grads[idx].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect()
}

/// Gradients produced by one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Result<Tensor> {
        if v.tape != self.tape || v.idx >= self.grads.len() {
            return Err(AdError::DetachedTensor);
        }
        let shape = self.shapes[v.idx].clone();
        let n: usize = shape.iter().product();
        let values = self.grads[v.idx].clone().unwrap_or_else(|| vec![0.0; n]);
        Tensor::new(shape, values)
    }
}
