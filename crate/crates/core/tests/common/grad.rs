//! Central finite-difference gradient checks.

use msnmt::numerics::{OpKind, Scalar, Tape, Tensor};
use msnmt::Result;
use rand::Rng;

pub const STEP: f64 = 1e-5;

/// A scalar function of several tensors, evaluable at either precision.
pub trait Objective {
    /// Value and, if `grad`, the gradient with respect to every input.
    fn eval<T: Scalar>(&self, inputs: &[Tensor<T>], grad: bool) -> Result<(f64, Vec<Tensor<T>>)>;
}

/// `sum(op(inputs) * weights)` for one tape operation, so every output
/// element contributes with a distinct coefficient.
pub struct Projected {
    pub kind: OpKind<f64>,
    pub weights: Tensor<f64>,
}

fn cast_kind<T: Scalar>(kind: &OpKind<f64>) -> OpKind<T> {
    match kind {
        OpKind::MatMul => OpKind::MatMul,
        OpKind::Add => OpKind::Add,
        OpKind::Sub => OpKind::Sub,
        OpKind::Mul => OpKind::Mul,
        OpKind::Tanh => OpKind::Tanh,
        OpKind::Sigmoid => OpKind::Sigmoid,
        OpKind::Softmax => OpKind::Softmax,
        OpKind::LogSoftmax => OpKind::LogSoftmax,
        OpKind::Concat { axis } => OpKind::Concat { axis: *axis },
        OpKind::Embedding { ids } => OpKind::Embedding { ids: ids.clone() },
        OpKind::RowSelect { cols } => OpKind::RowSelect { cols: cols.clone() },
        OpKind::SumAxis { axis } => OpKind::SumAxis { axis: *axis },
        OpKind::SumAll => OpKind::SumAll,
        OpKind::Scale(f) => OpKind::Scale(T::of(*f)),
        OpKind::Transpose => OpKind::Transpose,
    }
}

impl Projected {
    /// Random projection weights shaped like the op's output.
    pub fn new<R: Rng>(kind: OpKind<f64>, inputs: &[Tensor<f64>], rng: &mut R) -> Self {
        let mut tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = tape.forward(kind.clone(), &vars).expect("valid op inputs");
        let shape = tape.value(out).shape().to_vec();
        Projected {
            kind,
            weights: Tensor::uniform(&shape, -1.0, 1.0, rng),
        }
    }
}

impl Objective for Projected {
    fn eval<T: Scalar>(&self, inputs: &[Tensor<T>], grad: bool) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = tape.forward(cast_kind(&self.kind), &vars)?;
        let w = tape.leaf(self.weights.cast());
        let prod = tape.mul(out, w)?;
        let loss = tape.sum_all(prod)?;
        let value = tape.value(loss).item().as_f64();
        if !grad {
            return Ok((value, Vec::new()));
        }
        let g = tape.backward(loss)?;
        Ok((value, vars.iter().map(|&v| g.get(v).unwrap().clone()).collect()))
    }
}

/// Central differences of `obj` in f64 around `inputs`.
pub fn numeric_gradient<O: Objective>(obj: &O, inputs: &[Tensor<f64>]) -> Vec<Tensor<f64>> {
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[t].shape());
        for k in 0..inputs[t].numel() {
            let x = inputs[t].data()[k];
            work[t].data_mut()[k] = x + STEP;
            let up = obj.eval(&work, false).unwrap().0;
            work[t].data_mut()[k] = x - STEP;
            let down = obj.eval(&work, false).unwrap().0;
            work[t].data_mut()[k] = x;
            g.data_mut()[k] = (up - down) / (2.0 * STEP);
        }
        out.push(g);
    }
    out
}

/// `||a - b|| / max(||a|| + ||b||, tiny)` over all tensors jointly.
pub fn relative_error<T: Scalar>(analytic: &[Tensor<T>], numeric: &[Tensor<f64>]) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (a, b) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), b.shape());
        for (&x, &y) in a.data().iter().zip(b.data()) {
            let x = x.as_f64();
            diff += (x - y).powi(2);
            na += x * x;
            nb += y * y;
        }
    }
    diff.sqrt() / (na.sqrt() + nb.sqrt()).max(1e-300)
}

pub struct GradReport {
    pub err64: f64,
    pub err32: f64,
}

/// Relative errors of the f64 and f32 analytic gradients. The f32 gradient
/// is compared with f64 differences taken at the f32-rounded point.
pub fn check<O: Objective>(obj: &O, inputs: &[Tensor<f64>]) -> GradReport {
    let (_, analytic64) = obj.eval(inputs, true).unwrap();
    let numeric64 = numeric_gradient(obj, inputs);
    let inputs32: Vec<Tensor<f32>> = inputs.iter().map(Tensor::cast).collect();
    let rounded: Vec<Tensor<f64>> = inputs32.iter().map(Tensor::cast).collect();
    let (_, analytic32) = obj.eval(&inputs32, true).unwrap();
    let numeric32 = numeric_gradient(obj, &rounded);
    GradReport {
        err64: relative_error(&analytic64, &numeric64),
        err32: relative_error(&analytic32, &numeric32),
    }
}

/// One randomized instance of every differentiable op, extents in 1..=10.
pub fn random_op_cases<R: Rng>(rng: &mut R) -> Vec<(OpKind<f64>, Vec<Tensor<f64>>)> {
    let mut d = || rng.gen_range(1..=10usize);
    let (m, k, n, m2, n2) = (d(), d(), d(), d(), d());
    let mut t = |shape: &[usize]| Tensor::uniform(shape, -1.0, 1.0, rng);
    let a = t(&[m, n]);
    let b = t(&[m, n]);
    let cases = vec![
        (OpKind::MatMul, vec![t(&[m, k]), t(&[k, n])]),
        (OpKind::Add, vec![a.clone(), b.clone()]),
        (OpKind::Add, vec![a.clone(), t(&[1, n])]),
        (OpKind::Sub, vec![a.clone(), b.clone()]),
        (OpKind::Mul, vec![a.clone(), b.clone()]),
        (OpKind::Tanh, vec![t(&[m, n])]),
        (OpKind::Sigmoid, vec![t(&[m, n])]),
        (OpKind::Softmax, vec![t(&[m, n])]),
        (OpKind::LogSoftmax, vec![t(&[m, n])]),
        (OpKind::Concat { axis: 0 }, vec![t(&[m, n]), t(&[m2, n])]),
        (OpKind::Concat { axis: 1 }, vec![t(&[m, n]), t(&[m, n2])]),
        (OpKind::SumAxis { axis: 0 }, vec![a.clone()]),
        (OpKind::SumAxis { axis: 1 }, vec![a.clone()]),
        (OpKind::SumAll, vec![a.clone()]),
        (OpKind::Scale(-0.75), vec![a.clone()]),
        (OpKind::Transpose, vec![a]),
    ];
    let mut cases = cases;
    let ids: Vec<usize> = (0..m2).map(|_| rng.gen_range(0..k)).collect();
    cases.push((OpKind::Embedding { ids }, vec![Tensor::uniform(&[k, n], -1.0, 1.0, rng)]));
    let cols: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
    cases.push((OpKind::RowSelect { cols }, vec![Tensor::uniform(&[m, n], -1.0, 1.0, rng)]));
    cases
}
