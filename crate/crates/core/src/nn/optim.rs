//! Adam and RMSprop updates over flat parameter buffers.

use std::fmt;
use std::str::FromStr;

use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// A learnable tensor with its gradient and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        Parameter {
            grad: Tensor::zeros_like(&value),
            adam_m: Tensor::zeros_like(&value),
            adam_v: Tensor::zeros_like(&value),
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    RmsProp,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            other => Err(Error::Invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl RmsPropConfig {
    pub fn with_lr(lr: f64) -> Self {
        RmsPropConfig { lr, decay: 0.9, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of a flat buffer at step `t >= 1`.
pub fn adam_update<T: Scalar>(value: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) -> Result<()> {
    if t < 1 {
        return Err(Error::Invalid("Adam step index starts at 1".into()));
    }
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let one = T::one();
    let c1 = T::of(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::of(1.0 - cfg.beta2.powi(t as i32));
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.eps);
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// RMSprop: `v ← ρv + (1-ρ)g²; θ ← θ - lr g / (√v + eps)`.
pub fn rmsprop_update<T: Scalar>(value: &mut [T], grad: &[T], v: &mut [T], cfg: &RmsPropConfig) {
    let rho = T::of(cfg.decay);
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.eps);
    for i in 0..value.len() {
        let g = grad[i];
        v[i] = rho * v[i] + (T::one() - rho) * g * g;
        value[i] -= lr * g / (v[i].sqrt() + eps);
    }
}

pub fn adam_step<T: Scalar>(params: &mut [Parameter<T>], t: u64, cfg: &AdamConfig) -> Result<()> {
    for p in params.iter_mut() {
        p.grad.ensure_finite("gradient")?;
        let Parameter { value, grad, adam_m, adam_v } = p;
        adam_update(value.data_mut(), grad.data(), adam_m.data_mut(), adam_v.data_mut(), t, cfg)?;
    }
    Ok(())
}
