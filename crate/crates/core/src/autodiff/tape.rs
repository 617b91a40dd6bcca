use std::cell::RefCell;
use std::rc::Rc;

use super::tensor::{gemm_acc, gemm_tn_acc, sigmoid, softplus, Tensor};
use super::TensorError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var, usize),
    Concat(Vec<Var>, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    SumAxis(Var, usize),
    Sum(Var),
    BceWithLogits(Var, Rc<Tensor>),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run record of a computation, rebuilt for every forward pass.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order and [`Tape::backward`] is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients of a scalar with respect to the leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`; all zeros when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Tensor {
        let shape = self.shapes[var.0].clone();
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => {
                let n = shape.iter().product();
                Tensor::new(shape, vec![0.0; n]).expect("gradient shape")
            }
        }
    }

    /// Borrowing accessor; `None` for unreachable leaves.
    pub fn raw(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }
}

fn check_matrix(op: &'static str, t: &Tensor) -> Result<(), TensorError> {
    if t.is_matrix() {
        Ok(())
    } else {
        Err(TensorError::Rank {
            op,
            shape: t.shape().to_vec(),
        })
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
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
        self.nodes.borrow().is_empty()
    }

    pub fn value(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// A differentiable leaf.
    pub fn param(&self, value: impl Into<Rc<Tensor>>) -> Var {
        self.leaf(value.into(), true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: impl Into<Rc<Tensor>>) -> Var {
        self.leaf(value.into(), false)
    }

    fn leaf(&self, value: Rc<Tensor>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn push(&self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite(name));
        }
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = inputs.iter().any(|v| nodes[v.0].needs_grad);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Ok(Var(nodes.len() - 1))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        check_matrix("matmul", &av)?;
        check_matrix("matmul", &bv)?;
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        if bv.rows() != k {
            return Err(shape_err("matmul", &av, &bv));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(av.data(), bv.data(), &mut out, m, k, n);
        self.push("matmul", Tensor::matrix(m, n, out)?, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        check_matrix("transpose", &av)?;
        self.push("transpose", av.transposed(), Op::Transpose(a), &[a])
    }

    fn binary(&self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)
        } else if bv.len() == 1 {
            let y = bv.data()[0];
            Tensor::new(av.shape().to_vec(), av.data().iter().map(|&x| f(x, y)).collect())
        } else if av.len() == 1 {
            let x = av.data()[0];
            Tensor::new(bv.shape().to_vec(), bv.data().iter().map(|&y| f(x, y)).collect())
        } else {
            Err(shape_err(name, &av, &bv))
        }
    }

    /// Elementwise sum; shapes must match or one side must hold one element.
    pub fn add(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.binary("add", a, b, |x, y| x + y)?;
        self.push("add", t, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.binary("sub", a, b, |x, y| x - y)?;
        self.push("sub", t, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.binary("mul", a, b, |x, y| x * y)?;
        self.push("mul", t, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1 × n` row to every row of an `m × n` matrix (bias broadcast).
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (av, rv) = (self.value(a), self.value(row));
        check_matrix("add_row", &av)?;
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(shape_err("add_row", &av, &rv));
        }
        let n = av.cols();
        let mut out = av.data().to_vec();
        for chunk in out.chunks_mut(n.max(1)) {
            for (o, &r) in chunk.iter_mut().zip(rv.data()) {
                *o += r;
            }
        }
        self.push(
            "add_row",
            Tensor::new(av.shape().to_vec(), out)?,
            Op::AddRow(a, row),
            &[a, row],
        )
    }

    /// Scales row `i` of an `m × n` matrix by entry `i` of an `m × 1` column.
    pub fn mul_col(&self, a: Var, col: Var) -> Result<Var, TensorError> {
        let (av, cv) = (self.value(a), self.value(col));
        check_matrix("mul_col", &av)?;
        if cv.cols() != 1 || cv.rows() != av.rows() {
            return Err(shape_err("mul_col", &av, &cv));
        }
        let n = av.cols();
        let mut out = av.data().to_vec();
        for (i, &s) in cv.data().iter().enumerate() {
            for o in &mut out[i * n..(i + 1) * n] {
                *o *= s;
            }
        }
        self.push(
            "mul_col",
            Tensor::new(av.shape().to_vec(), out)?,
            Op::MulCol(a, col),
            &[a, col],
        )
    }

    /// `scale * a + shift`.
    pub fn affine(&self, a: Var, scale: f64, shift: f64) -> Result<Var, TensorError> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| scale * x + shift).collect();
        self.push(
            "affine",
            Tensor::new(av.shape().to_vec(), data)?,
            Op::Affine(a, scale),
            &[a],
        )
    }

    /// `1 - a`.
    pub fn one_minus(&self, a: Var) -> Result<Var, TensorError> {
        self.affine(a, -1.0, 1.0)
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| sigmoid(x)).collect();
        self.push("sigmoid", Tensor::new(av.shape().to_vec(), data)?, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| x.tanh()).collect();
        self.push("tanh", Tensor::new(av.shape().to_vec(), data)?, Op::Tanh(a), &[a])
    }

    /// Softmax along `axis`: `1` normalizes each row, `0` each column.
    pub fn softmax(&self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        check_matrix("softmax", &av)?;
        if av.is_empty() {
            return Err(TensorError::Empty("softmax"));
        }
        let (m, n) = (av.rows(), av.cols());
        let mut out = vec![0.0; m * n];
        match axis {
            1 => {
                for i in 0..m {
                    softmax_strided(av.data(), &mut out, i * n, 1, n);
                }
            }
            0 => {
                for j in 0..n {
                    softmax_strided(av.data(), &mut out, j, n, m);
                }
            }
            other => return Err(TensorError::Axis(other)),
        }
        self.push("softmax", Tensor::matrix(m, n, out)?, Op::Softmax(a, axis), &[a])
    }

    pub fn concat(&self, a: Var, b: Var, axis: usize) -> Result<Var, TensorError> {
        self.concat_all(&[a, b], axis)
    }

    /// Concatenates matrices along `axis`. Parts with no elements are skipped.
    pub fn concat_all(&self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        if axis > 1 {
            return Err(TensorError::Axis(axis));
        }
        let values: Vec<Rc<Tensor>> = parts.iter().map(|&p| self.value(p)).collect();
        let kept: Vec<(Var, &Rc<Tensor>)> = parts
            .iter()
            .copied()
            .zip(values.iter())
            .filter(|(_, v)| !v.is_empty())
            .collect();
        let Some((_, first)) = kept.first() else {
            return Err(TensorError::Empty("concat"));
        };
        for (_, v) in &kept {
            check_matrix("concat", v)?;
            let agree = if axis == 0 {
                v.cols() == first.cols()
            } else {
                v.rows() == first.rows()
            };
            if !agree {
                return Err(shape_err("concat", first, v));
            }
        }
        let out = if axis == 0 {
            let rows = kept.iter().map(|(_, v)| v.rows()).sum();
            let mut data = Vec::with_capacity(rows * first.cols());
            for (_, v) in &kept {
                data.extend_from_slice(v.data());
            }
            Tensor::matrix(rows, first.cols(), data)?
        } else {
            let m = first.rows();
            let cols: usize = kept.iter().map(|(_, v)| v.cols()).sum();
            let mut data = Vec::with_capacity(m * cols);
            for i in 0..m {
                for (_, v) in &kept {
                    data.extend_from_slice(v.row_slice(i));
                }
            }
            Tensor::matrix(m, cols, data)?
        };
        let vars: Vec<Var> = kept.iter().map(|(v, _)| *v).collect();
        self.push("concat", out, Op::Concat(vars.clone(), axis), &vars)
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        check_matrix("slice_rows", &av)?;
        if start > end || end > av.rows() {
            return Err(TensorError::Index {
                op: "slice_rows",
                index: end,
                len: av.rows(),
            });
        }
        let n = av.cols();
        let data = av.data()[start * n..end * n].to_vec();
        self.push(
            "slice_rows",
            Tensor::matrix(end - start, n, data)?,
            Op::SliceRows(a, start),
            &[a],
        )
    }

    /// Selects rows by index; repeated indices are allowed.
    pub fn gather_rows(&self, a: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let av = self.value(a);
        check_matrix("gather_rows", &av)?;
        let n = av.cols();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= av.rows() {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: i,
                    len: av.rows(),
                });
            }
            data.extend_from_slice(av.row_slice(i));
        }
        self.push(
            "gather_rows",
            Tensor::matrix(indices.len(), n, data)?,
            Op::GatherRows(a, indices.to_vec()),
            &[a],
        )
    }

    /// Sum over `axis`: `0` gives a `1 × n` row, `1` gives an `m × 1` column.
    pub fn sum_axis(&self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        check_matrix("sum_axis", &av)?;
        let (m, n) = (av.rows(), av.cols());
        let out = match axis {
            0 => {
                let mut s = vec![0.0; n];
                for i in 0..m {
                    for (acc, &x) in s.iter_mut().zip(av.row_slice(i)) {
                        *acc += x;
                    }
                }
                Tensor::matrix(1, n, s)?
            }
            1 => {
                let s = (0..m).map(|i| av.row_slice(i).iter().sum()).collect();
                Tensor::matrix(m, 1, s)?
            }
            other => return Err(TensorError::Axis(other)),
        };
        self.push("sum_axis", out, Op::SumAxis(a, axis), &[a])
    }

    pub fn sum(&self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Summed binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// evaluated as `softplus(z) - y z` so saturated logits never hit `log(0)`.
    pub fn bce_with_logits(&self, logits: Var, targets: &Tensor) -> Result<Var, TensorError> {
        let zv = self.value(logits);
        if zv.shape() != targets.shape() {
            return Err(shape_err("bce_with_logits", &zv, targets));
        }
        let loss = zv
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum();
        self.push(
            "bce_with_logits",
            Tensor::scalar(loss),
            Op::BceWithLogits(logits, Rc::new(targets.clone())),
            &[logits],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let nodes = self.nodes.borrow();
        let lv = &nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let shapes: Vec<Vec<usize>> = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            backprop_node(&nodes, node, &g, &mut grads);
        }
        Ok(Gradients { grads, shapes })
    }
}

fn softmax_strided(src: &[f64], dst: &mut [f64], offset: usize, stride: usize, count: usize) {
    let max = (0..count)
        .map(|i| src[offset + i * stride])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for i in 0..count {
        let e = (src[offset + i * stride] - max).exp();
        dst[offset + i * stride] = e;
        total += e;
    }
    for i in 0..count {
        dst[offset + i * stride] /= total;
    }
}

fn grad_slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    let len = node.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Gradient of a binary elementwise op where `other_factor(i)` is the local
/// derivative for flat output index `i`.
fn binary_grad(grads: &mut [Option<Vec<f64>>], nodes: &[Node], target: Var, g: &[f64], local: impl Fn(usize) -> f64) {
    let broadcast = nodes[target.0].value.len() == 1 && g.len() != 1;
    if let Some(slot) = grad_slot(grads, nodes, target) {
        if broadcast {
            slot[0] += g.iter().enumerate().map(|(i, &gi)| gi * local(i)).sum::<f64>();
        } else {
            for (i, (s, &gi)) in slot.iter_mut().zip(g).enumerate() {
                *s += gi * local(i);
            }
        }
    }
}

fn backprop_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                let bt = bv.transposed();
                gemm_acc(g, bt.data(), ga, m, n, k);
            }
            if let Some(gb) = grad_slot(grads, nodes, *b) {
                gemm_tn_acc(av.data(), g, gb, m, k, n);
            }
        }
        Op::Transpose(a) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                let gt = Tensor::matrix(out.rows(), out.cols(), g.to_vec())
                    .expect("shape")
                    .transposed();
                add_into(ga, gt.data());
            }
        }
        Op::Add(a, b) => {
            binary_grad(grads, nodes, *a, g, |_| 1.0);
            binary_grad(grads, nodes, *b, g, |_| 1.0);
        }
        Op::Sub(a, b) => {
            binary_grad(grads, nodes, *a, g, |_| 1.0);
            binary_grad(grads, nodes, *b, g, |_| -1.0);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (Rc::clone(&nodes[a.0].value), Rc::clone(&nodes[b.0].value));
            let pick = |t: &Tensor, i: usize| {
                if t.len() == 1 {
                    t.data()[0]
                } else {
                    t.data()[i]
                }
            };
            binary_grad(grads, nodes, *a, g, |i| pick(&bv, i));
            binary_grad(grads, nodes, *b, g, |i| pick(&av, i));
        }
        Op::AddRow(a, row) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gr) = grad_slot(grads, nodes, *row) {
                let n = out.cols();
                for chunk in g.chunks(n.max(1)) {
                    add_into(gr, chunk);
                }
            }
        }
        Op::MulCol(a, col) => {
            let (av, cv) = (&nodes[a.0].value, &nodes[col.0].value);
            let n = av.cols();
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for (i, &s) in cv.data().iter().enumerate() {
                    for j in 0..n {
                        ga[i * n + j] += g[i * n + j] * s;
                    }
                }
            }
            if let Some(gc) = grad_slot(grads, nodes, *col) {
                for (i, slot) in gc.iter_mut().enumerate() {
                    *slot += (0..n).map(|j| g[i * n + j] * av.data()[i * n + j]).sum::<f64>();
                }
            }
        }
        Op::Affine(a, scale) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for (d, &gi) in ga.iter_mut().zip(g) {
                    *d += scale * gi;
                }
            }
        }
        Op::Sigmoid(a) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for ((d, &gi), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * y * (1.0 - y);
                }
            }
        }
        Op::Tanh(a) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for ((d, &gi), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * (1.0 - y * y);
                }
            }
        }
        Op::Softmax(a, axis) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                let (m, n) = (out.rows(), out.cols());
                let y = out.data();
                let (groups, count, stride) = if *axis == 1 { (m, n, 1) } else { (n, m, n) };
                for grp in 0..groups {
                    let off = if *axis == 1 { grp * n } else { grp };
                    let dot: f64 = (0..count).map(|i| g[off + i * stride] * y[off + i * stride]).sum();
                    for i in 0..count {
                        let idx = off + i * stride;
                        ga[idx] += y[idx] * (g[idx] - dot);
                    }
                }
            }
        }
        Op::Concat(parts, axis) => {
            let total_cols = out.cols();
            let mut offset = 0;
            for p in parts {
                let pv = Rc::clone(&nodes[p.0].value);
                if *axis == 0 {
                    let len = pv.len();
                    if let Some(gp) = grad_slot(grads, nodes, *p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                } else {
                    let c = pv.cols();
                    if let Some(gp) = grad_slot(grads, nodes, *p) {
                        for i in 0..pv.rows() {
                            let src = &g[i * total_cols + offset..i * total_cols + offset + c];
                            add_into(&mut gp[i * c..(i + 1) * c], src);
                        }
                    }
                    offset += c;
                }
            }
        }
        Op::SliceRows(a, start) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                let n = out.cols();
                add_into(&mut ga[start * n..start * n + g.len()], g);
            }
        }
        Op::GatherRows(a, indices) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                let n = out.cols();
                for (r, &src_row) in indices.iter().enumerate() {
                    add_into(&mut ga[src_row * n..(src_row + 1) * n], &g[r * n..(r + 1) * n]);
                }
            }
        }
        Op::SumAxis(a, axis) => {
            let av = &nodes[a.0].value;
            let (m, n) = (av.rows(), av.cols());
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] += if *axis == 0 { g[j] } else { g[i] };
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for d in ga.iter_mut() {
                    *d += g[0];
                }
            }
        }
        Op::BceWithLogits(z, targets) => {
            let zv = Rc::clone(&nodes[z.0].value);
            if let Some(gz) = grad_slot(grads, nodes, *z) {
                for ((d, &zi), &yi) in gz.iter_mut().zip(zv.data()).zip(targets.data()) {
                    *d += g[0] * (sigmoid(zi) - yi);
                }
            }
        }
    }
}
