use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter, plus the number
/// of updates applied so far.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.second
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    let cfg = state.config;
    if !(cfg.learning_rate >= 0.0) {
        return Err(Error::usage(format!(
            "learning rate must be non-negative, got {}",
            cfg.learning_rate
        )));
    }
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Dimension {
            kind: "adam_step",
            detail: format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                state.first.len()
            ),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::Dimension {
                kind: "adam_step",
                detail: format!(
                    "parameter {i} has shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                ),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let one = T::one();
    let correction1 = T::of(1.0 - cfg.beta1.powi(t));
    let correction2 = T::of(1.0 - cfg.beta2.powi(t));
    let lr = T::of(cfg.learning_rate);
    let eps = T::of(cfg.epsilon);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for (((x, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / correction1;
            let v_hat = *vi / correction2;
            *x = *x - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `coefficient * sum(p^2)` over all `params`, recorded on the tape.
pub fn l2_penalty<T: Scalar>(tape: &mut Tape<'_, T>, params: &[Var], coefficient: f64) -> Result<Var> {
    if !(coefficient >= 0.0) {
        return Err(Error::usage(format!(
            "l2 coefficient must be non-negative, got {coefficient}"
        )));
    }
    let mut total: Option<Var> = None;
    for &p in params {
        let sq = tape.mul(p, p)?;
        let s = tape.sum_all(sq)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    match total {
        Some(sum) => tape.scale(sum, T::of(coefficient)),
        None => Ok(tape.leaf(Tensor::scalar(T::zero()))),
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar>(shape: &[usize], rate: f64, seed: u64) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::usage(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    let keep = T::of(1.0 / (1.0 - rate));
    if rate == 0.0 {
        return Ok(Tensor::ones(shape));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), data)
}
