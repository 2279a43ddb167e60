use super::tensor::{axpy, gemv_acc, gemv_t_acc, outer_acc, Scalar, Tensor};
use crate::{Error, Result};

/// Affine layer `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            w: Tensor::zeros(&[output, input]),
            b: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut y = self.b.data().to_vec();
        gemv_acc(&self.w, x, &mut y);
        y
    }

    /// Accumulates `dW`, `db` into `g` and `Wᵀ dy` into `dx`.
    pub fn backward(&self, x: &[T], dy: &[T], g: &mut Dense<T>, dx: &mut [T]) {
        outer_acc(&mut g.w, dy, x);
        axpy(g.b.data_mut(), T::one(), dy);
        gemv_t_acc(&self.w, dy, dx);
    }

    pub fn tensors(&self) -> [&Tensor<T>; 2] {
        [&self.w, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.w, &mut self.b]
    }
}

/// Softmax with the maximum subtracted first.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    // Accumulated in f64 so f32 distributions over large vocabularies still sum to 1.
    let sum = T::of(out.iter().map(|&v| Scalar::to_f64(v)).sum::<f64>());
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Probability over the label vocabulary from decoder state `s`.
pub fn output_distribution<T: Scalar>(s: &[T], out: &Dense<T>) -> Result<Vec<T>> {
    if s.len() != out.input_dim() {
        return Err(Error::Shape(format!(
            "output layer expects {} inputs, got {}",
            out.input_dim(),
            s.len()
        )));
    }
    Ok(softmax(&out.forward(s)))
}

/// Mean negative log-likelihood of the targets over non-PAD positions.
pub fn masked_cross_entropy<T: Scalar>(probs: &[Vec<T>], targets: &[usize], pad_id: usize) -> Result<T> {
    if probs.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} distributions for {} targets",
            probs.len(),
            targets.len()
        )));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for (p, &t) in probs.iter().zip(targets) {
        if t == pad_id {
            continue;
        }
        let pt = *p
            .get(t)
            .ok_or_else(|| Error::Invalid(format!("target id {t} outside vocabulary of {}", p.len())))?;
        total -= pt.ln();
        count += 1;
    }
    if count == 0 {
        return Err(Error::Invalid("every target position is padding".into()));
    }
    Ok(total / T::of(count as f64))
}

/// Gradient of `-scale · ln softmax(logits)[target]` w.r.t. the logits.
pub fn cross_entropy_logit_grad<T: Scalar>(probs: &[T], target: usize, scale: T) -> Vec<T> {
    let mut g: Vec<T> = probs.iter().map(|&p| p * scale).collect();
    g[target] -= scale;
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_layer_is_uniform() {
        let d = Dense::<f64>::zeros(3, 10);
        let p = output_distribution(&[0.3, -1.0, 2.0], &d).unwrap();
        assert!(p.iter().all(|&x| (x - 0.1).abs() < 1e-15));
        assert!(output_distribution(&[0.3], &d).is_err());
    }

    #[test]
    fn softmax_shift_invariance_and_stability() {
        let l = [1.0, 2.0, -3.0, 0.5];
        let shifted: Vec<f64> = l.iter().map(|x| x + 1000.0).collect();
        let a = softmax(&l);
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let big = softmax(&[1e4f32, 0.0, -1e4]);
        assert!(big.iter().all(|x| x.is_finite()));
        // Independent 64-bit evaluation.
        let z: f64 = l.iter().map(|x| x.exp()).sum();
        for (x, li) in a.iter().zip(&l) {
            assert!((x - li.exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = vec![vec![0.1f64; 10]; 3];
        let l = masked_cross_entropy(&uniform, &[4, 5, 6], 0).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);

        let mut sure = vec![vec![0.0f64; 4]; 2];
        sure[0][1] = 1.0;
        sure[1][3] = 1.0;
        assert_eq!(masked_cross_entropy(&sure, &[1, 3], 0).unwrap(), 0.0);

        // (-ln 0.5 - ln 0.05) / 2 with the PAD position ignored.
        let probs = vec![vec![0.2, 0.5, 0.3], vec![0.25, 0.25, 0.5], vec![0.9, 0.05, 0.05]];
        let l = masked_cross_entropy(&probs, &[1, 0, 2], 0).unwrap();
        let want = (-(0.5f64).ln() - (0.05f64).ln()) / 2.0;
        assert!((l - want).abs() < 1e-12);
        let l = masked_cross_entropy(&probs, &[1, 1, 0], 0).unwrap();
        assert!((l - (-(0.5f64).ln() - (0.25f64).ln()) / 2.0).abs() < 1e-12);

        assert!(masked_cross_entropy(&probs, &[0, 0, 0], 0).is_err());
        assert!(masked_cross_entropy(&probs, &[7, 0, 0], 0).is_err());
    }

    #[test]
    fn linear_backward() {
        // loss = sum(W x): dW = 1 xᵀ
        let d = Dense::<f64>::zeros(3, 2);
        let x = [1.0, 2.0, 3.0];
        let mut g = Dense::zeros(3, 2);
        let mut dx = vec![0.0; 3];
        d.backward(&x, &[1.0, 1.0], &mut g, &mut dx);
        assert_eq!(g.w.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.b.data(), &[1.0, 1.0]);
    }
}
