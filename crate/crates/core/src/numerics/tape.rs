//! Reverse-mode differentiation over a linear tape.
//!
//! Every value lives in an arena slot addressed by [`Var`]. Leaves may borrow
//! their tensor (model parameters are bound without copying); recorded
//! operations own their outputs. Because a node can only reference earlier
//! slots, the arena order is a topological order and one reverse sweep
//! visits every node once.

use std::borrow::Cow;

use super::tensor::{matmul_raw, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable operation kinds understood by [`Tape::forward`].
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind<T> {
    /// `[m, k] x [k, n] -> [m, n]`.
    MatMul,
    /// Elementwise sum. The right operand may also be a `[1, n]` row that is
    /// broadcast over every row of an `[m, n]` left operand.
    Add,
    /// Elementwise difference of equal shapes.
    Sub,
    /// Elementwise (Hadamard) product of equal shapes.
    Mul,
    Tanh,
    Sigmoid,
    /// Softmax over the last axis.
    Softmax,
    /// Log-softmax over the last axis.
    LogSoftmax,
    /// Concatenate rank-2 inputs along `axis` (0 stacks rows, 1 joins columns).
    Concat { axis: usize },
    /// Gather rows `ids` of a `[vocab, dim]` table into `[ids.len(), dim]`.
    Embedding { ids: Vec<usize> },
    /// For an `[m, n]` input pick entry `cols[i]` of row `i`, giving `[m, 1]`.
    RowSelect { cols: Vec<usize> },
    /// Sum a rank-2 input over `axis`, keeping it as an extent of 1.
    SumAxis { axis: usize },
    /// Sum of all entries into a scalar.
    SumAll,
    /// Multiply by a constant.
    Scale(T),
    /// Swap the axes of a rank-2 input.
    Transpose,
}

impl<T> OpKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softmax => "softmax",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Concat { .. } => "concat",
            OpKind::Embedding { .. } => "embedding",
            OpKind::RowSelect { .. } => "row_select",
            OpKind::SumAxis { .. } => "sum_axis",
            OpKind::SumAll => "sum_all",
            OpKind::Scale(_) => "scale",
            OpKind::Transpose => "transpose",
        }
    }
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor<T>>,
    op: Option<(OpKind<T>, Vec<Var>)>,
}

pub struct Tape<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `var`. Leaves that did not
    /// contribute to the loss carry an all-zero gradient.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn dim_err<T: Scalar>(kind: &OpKind<T>, detail: String) -> Error {
    Error::Dimension {
        kind: kind.name(),
        detail,
    }
}

fn arity<T: Scalar>(kind: &OpKind<T>, shapes: &[&[usize]], want: usize) -> Result<()> {
    if shapes.len() != want {
        return Err(dim_err(
            kind,
            format!("expected {want} inputs, got {}", shapes.len()),
        ));
    }
    Ok(())
}

fn rank2<T: Scalar>(kind: &OpKind<T>, shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [r, c] => Ok((r, c)),
        _ => Err(dim_err(kind, format!("needs a rank-2 input, got {shape:?}"))),
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an owned leaf (input, constant or parameter copy).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Cow::Owned(value), None)
    }

    /// Record a leaf that borrows its tensor, e.g. a model parameter.
    pub fn leaf_ref(&mut self, value: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(value), None)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Option<(OpKind<T>, Vec<Var>)>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Evaluate `kind` on `inputs` and record the result.
    pub fn forward(&mut self, kind: OpKind<T>, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = inputs.iter().map(|v| self.value(*v)).collect();
        let out = eval(&kind, &values)?;
        if !out.is_finite() {
            return Err(Error::Numeric { kind: kind.name() });
        }
        Ok(self.push(Cow::Owned(out), Some((kind, inputs.to_vec()))))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(OpKind::Mul, &[a, b])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.forward(OpKind::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.forward(OpKind::Sigmoid, &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.forward(OpKind::Softmax, &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.forward(OpKind::LogSoftmax, &[a])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        self.forward(OpKind::Concat { axis }, inputs)
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.forward(OpKind::Embedding { ids: ids.to_vec() }, &[table])
    }

    pub fn row_select(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        self.forward(OpKind::RowSelect { cols: cols.to_vec() }, &[a])
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.forward(OpKind::SumAxis { axis }, &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.forward(OpKind::SumAll, &[a])
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        self.forward(OpKind::Scale(factor), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.forward(OpKind::Transpose, &[a])
    }

    /// Gradients of the scalar `loss` with respect to every earlier node.
    /// Contributions from shared subexpressions are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(loss_value.shape()));

        for index in (0..=loss.0).rev() {
            let Some((kind, inputs)) = &self.nodes[index].op else {
                continue;
            };
            let Some(upstream) = grads[index].take() else {
                continue;
            };
            let input_values: Vec<&Tensor<T>> = inputs.iter().map(|v| self.value(*v)).collect();
            let output = &*self.nodes[index].value;
            let local = vjp(kind, &input_values, output, &upstream);
            for (var, g) in inputs.iter().zip(local) {
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            // Keep the upstream gradient so callers can inspect interior nodes.
            grads[index] = Some(upstream);
        }

        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if slot.is_none() && node.op.is_none() {
                *slot = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }
}

fn eval<T: Scalar>(kind: &OpKind<T>, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape()).collect();
    match kind {
        OpKind::MatMul => {
            arity(kind, &shapes, 2)?;
            let (m, k) = rank2(kind, shapes[0])?;
            let (k2, n) = rank2(kind, shapes[1])?;
            if k != k2 {
                return Err(dim_err(
                    kind,
                    format!("{:?} x {:?}", shapes[0], shapes[1]),
                ));
            }
            let data = matmul_raw(inputs[0].data(), inputs[1].data(), m, k, n);
            Ok(Tensor::from_vec(&[m, n], data))
        }
        OpKind::Add => {
            arity(kind, &shapes, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() == b.shape() {
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
                return Ok(Tensor::from_vec(a.shape(), data));
            }
            if let (Some((m, n)), Some((1, n2))) = (a.dims2(), b.dims2()) {
                if n == n2 {
                    let mut data = a.data().to_vec();
                    for row in 0..m {
                        for (x, &y) in data[row * n..(row + 1) * n].iter_mut().zip(b.data()) {
                            *x = *x + y;
                        }
                    }
                    return Ok(Tensor::from_vec(&[m, n], data));
                }
            }
            Err(dim_err(kind, format!("{:?} + {:?}", shapes[0], shapes[1])))
        }
        OpKind::Sub | OpKind::Mul => {
            arity(kind, &shapes, 2)?;
            if shapes[0] != shapes[1] {
                return Err(dim_err(kind, format!("{:?} vs {:?}", shapes[0], shapes[1])));
            }
            let f = |x: T, y: T| if *kind == OpKind::Sub { x - y } else { x * y };
            let data = inputs[0]
                .data()
                .iter()
                .zip(inputs[1].data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Ok(Tensor::from_vec(shapes[0], data))
        }
        OpKind::Tanh => {
            arity(kind, &shapes, 1)?;
            Ok(inputs[0].map(|x| x.tanh()))
        }
        OpKind::Sigmoid => {
            arity(kind, &shapes, 1)?;
            Ok(inputs[0].map(sigmoid))
        }
        OpKind::Softmax | OpKind::LogSoftmax => {
            arity(kind, &shapes, 1)?;
            let x = inputs[0];
            let n = *x.shape().last().ok_or_else(|| {
                dim_err(kind, "needs at least one axis".to_string())
            })?;
            let log = matches!(kind, OpKind::LogSoftmax);
            let mut data = x.data().to_vec();
            for row in data.chunks_mut(n) {
                softmax_row(row, log);
            }
            Ok(Tensor::from_vec(x.shape(), data))
        }
        OpKind::Concat { axis } => {
            if inputs.is_empty() {
                return Err(dim_err(kind, "no inputs".to_string()));
            }
            let dims: Vec<(usize, usize)> = shapes
                .iter()
                .map(|s| rank2(kind, s))
                .collect::<Result<_>>()?;
            match axis {
                0 => {
                    let cols = dims[0].1;
                    if dims.iter().any(|d| d.1 != cols) {
                        return Err(dim_err(kind, format!("column mismatch in {shapes:?}")));
                    }
                    let rows = dims.iter().map(|d| d.0).sum();
                    let data = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
                    Ok(Tensor::from_vec(&[rows, cols], data))
                }
                1 => {
                    let rows = dims[0].0;
                    if dims.iter().any(|d| d.0 != rows) {
                        return Err(dim_err(kind, format!("row mismatch in {shapes:?}")));
                    }
                    let cols: usize = dims.iter().map(|d| d.1).sum();
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        for t in inputs {
                            data.extend_from_slice(t.row_slice(r));
                        }
                    }
                    Ok(Tensor::from_vec(&[rows, cols], data))
                }
                _ => Err(dim_err(kind, format!("axis {axis} out of range"))),
            }
        }
        OpKind::Embedding { ids } => {
            arity(kind, &shapes, 1)?;
            let (vocab, dim) = rank2(kind, shapes[0])?;
            if ids.is_empty() {
                return Err(dim_err(kind, "empty id list".to_string()));
            }
            let mut data = Vec::with_capacity(ids.len() * dim);
            for &id in ids {
                if id >= vocab {
                    return Err(dim_err(kind, format!("id {id} outside table of {vocab} rows")));
                }
                data.extend_from_slice(inputs[0].row_slice(id));
            }
            Ok(Tensor::from_vec(&[ids.len(), dim], data))
        }
        OpKind::RowSelect { cols } => {
            arity(kind, &shapes, 1)?;
            let (rows, n) = rank2(kind, shapes[0])?;
            if cols.len() != rows || cols.iter().any(|&c| c >= n) {
                return Err(dim_err(
                    kind,
                    format!("{} column indices for input {:?}", cols.len(), shapes[0]),
                ));
            }
            let data = cols.iter().enumerate().map(|(r, &c)| inputs[0].at(r, c)).collect();
            Ok(Tensor::from_vec(&[rows, 1], data))
        }
        OpKind::SumAxis { axis } => {
            arity(kind, &shapes, 1)?;
            let (rows, cols) = rank2(kind, shapes[0])?;
            let x = inputs[0];
            match axis {
                0 => {
                    let mut data = vec![T::zero(); cols];
                    for r in 0..rows {
                        for (acc, &v) in data.iter_mut().zip(x.row_slice(r)) {
                            *acc = *acc + v;
                        }
                    }
                    Ok(Tensor::from_vec(&[1, cols], data))
                }
                1 => {
                    let data = (0..rows).map(|r| x.row_slice(r).iter().copied().sum()).collect();
                    Ok(Tensor::from_vec(&[rows, 1], data))
                }
                _ => Err(dim_err(kind, format!("axis {axis} out of range"))),
            }
        }
        OpKind::SumAll => {
            arity(kind, &shapes, 1)?;
            Ok(Tensor::scalar(inputs[0].data().iter().copied().sum()))
        }
        OpKind::Scale(c) => {
            arity(kind, &shapes, 1)?;
            let c = *c;
            Ok(inputs[0].map(|x| x * c))
        }
        OpKind::Transpose => {
            arity(kind, &shapes, 1)?;
            rank2(kind, shapes[0])?;
            Ok(inputs[0].transpose())
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// In-place softmax (or log-softmax) of one row, shifted by the row maximum.
fn softmax_row<T: Scalar>(row: &mut [T], log: bool) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = *x - max;
        total = total + x.exp();
    }
    if log {
        let log_total = total.ln();
        for x in row.iter_mut() {
            *x = *x - log_total;
        }
    } else {
        for x in row.iter_mut() {
            *x = x.exp() / total;
        }
    }
}

/// Vector-Jacobian products: the gradient of each input given the upstream
/// gradient of the output.
fn vjp<T: Scalar>(
    kind: &OpKind<T>,
    inputs: &[&Tensor<T>],
    output: &Tensor<T>,
    up: &Tensor<T>,
) -> Vec<Tensor<T>> {
    match kind {
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k) = a.dims2().unwrap();
            let n = b.shape()[1];
            let bt = b.transpose();
            let at = a.transpose();
            let da = matmul_raw(up.data(), bt.data(), m, n, k);
            let db = matmul_raw(at.data(), up.data(), k, m, n);
            vec![Tensor::from_vec(&[m, k], da), Tensor::from_vec(&[k, n], db)]
        }
        OpKind::Add => {
            let b = inputs[1];
            let db = if b.shape() == up.shape() {
                up.clone()
            } else {
                let (rows, cols) = up.dims2().unwrap();
                let mut acc = vec![T::zero(); cols];
                for r in 0..rows {
                    for (s, &g) in acc.iter_mut().zip(up.row_slice(r)) {
                        *s = *s + g;
                    }
                }
                Tensor::from_vec(&[1, cols], acc)
            };
            vec![up.clone(), db]
        }
        OpKind::Sub => vec![up.clone(), up.map(|g| -g)],
        OpKind::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let da = up.data().iter().zip(b.data()).map(|(&g, &y)| g * y).collect();
            let db = up.data().iter().zip(a.data()).map(|(&g, &x)| g * x).collect();
            vec![
                Tensor::from_vec(a.shape(), da),
                Tensor::from_vec(b.shape(), db),
            ]
        }
        OpKind::Tanh => {
            let d = up
                .data()
                .iter()
                .zip(output.data())
                .map(|(&g, &y)| g * (T::one() - y * y))
                .collect();
            vec![Tensor::from_vec(output.shape(), d)]
        }
        OpKind::Sigmoid => {
            let d = up
                .data()
                .iter()
                .zip(output.data())
                .map(|(&g, &y)| g * y * (T::one() - y))
                .collect();
            vec![Tensor::from_vec(output.shape(), d)]
        }
        OpKind::Softmax => {
            let n = *output.shape().last().unwrap();
            let mut d = Vec::with_capacity(output.numel());
            for (y, g) in output.data().chunks(n).zip(up.data().chunks(n)) {
                let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                d.extend(y.iter().zip(g).map(|(&yi, &gi)| yi * (gi - dot)));
            }
            vec![Tensor::from_vec(output.shape(), d)]
        }
        OpKind::LogSoftmax => {
            let n = *output.shape().last().unwrap();
            let mut d = Vec::with_capacity(output.numel());
            for (y, g) in output.data().chunks(n).zip(up.data().chunks(n)) {
                let total: T = g.iter().copied().sum();
                d.extend(y.iter().zip(g).map(|(&yi, &gi)| gi - yi.exp() * total));
            }
            vec![Tensor::from_vec(output.shape(), d)]
        }
        OpKind::Concat { axis } => {
            let mut grads = Vec::with_capacity(inputs.len());
            if *axis == 0 {
                let mut offset = 0;
                for t in inputs {
                    let len = t.numel();
                    grads.push(Tensor::from_vec(
                        t.shape(),
                        up.data()[offset..offset + len].to_vec(),
                    ));
                    offset += len;
                }
            } else {
                let rows = up.shape()[0];
                let mut col = 0;
                for t in inputs {
                    let width = t.shape()[1];
                    let mut data = Vec::with_capacity(rows * width);
                    for r in 0..rows {
                        data.extend_from_slice(&up.row_slice(r)[col..col + width]);
                    }
                    grads.push(Tensor::from_vec(t.shape(), data));
                    col += width;
                }
            }
            grads
        }
        OpKind::Embedding { ids } => {
            let table = inputs[0];
            let dim = table.shape()[1];
            let mut d = Tensor::zeros(table.shape());
            for (r, &id) in ids.iter().enumerate() {
                let dst = &mut d.data_mut()[id * dim..(id + 1) * dim];
                for (x, &g) in dst.iter_mut().zip(up.row_slice(r)) {
                    *x = *x + g;
                }
            }
            vec![d]
        }
        OpKind::RowSelect { cols } => {
            let x = inputs[0];
            let n = x.shape()[1];
            let mut d = Tensor::zeros(x.shape());
            for (r, &c) in cols.iter().enumerate() {
                d.data_mut()[r * n + c] = up.data()[r];
            }
            vec![d]
        }
        OpKind::SumAxis { axis } => {
            let x = inputs[0];
            let (rows, cols) = x.dims2().unwrap();
            let mut d = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    d.push(if *axis == 0 { up.data()[c] } else { up.data()[r] });
                }
            }
            vec![Tensor::from_vec(x.shape(), d)]
        }
        OpKind::SumAll => vec![Tensor::full(inputs[0].shape(), up.item())],
        OpKind::Scale(c) => {
            let c = *c;
            vec![up.map(|g| g * c)]
        }
        OpKind::Transpose => vec![up.transpose()],
    }
}
