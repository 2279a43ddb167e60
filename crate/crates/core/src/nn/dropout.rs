use rand::Rng;

use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Per-element multipliers: `0` for dropped units, `1 / (1 - rate)` for survivors.
#[derive(Debug, Clone)]
pub struct DropoutMask<T> {
    pub scale: Vec<T>,
}

impl<T: Scalar> DropoutMask<T> {
    pub fn sample<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Self> {
        check_rate(rate)?;
        let keep = T::of(1.0 / (1.0 - rate));
        let scale = (0..len)
            .map(|_| if rate > 0.0 && rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        Ok(DropoutMask { scale })
    }

    pub fn apply(&self, x: &mut [T]) {
        for (v, &s) in x.iter_mut().zip(&self.scale) {
            *v *= s;
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. Identity when not training.
pub fn dropout_apply<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, rate: f64, training: bool, rng: &mut R) -> Result<Tensor<T>> {
    check_rate(rate)?;
    let mut out = x.clone();
    if training && rate > 0.0 {
        DropoutMask::sample(x.len(), rate, rng)?.apply(out.data_mut());
    }
    Ok(out)
}
