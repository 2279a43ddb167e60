//! Additive attention: `e_j = v · tanh(W_s s + W_h h_j)`, softmax over the
//! unmasked positions, context `c = Σ α_j h_j`.

use super::tensor::{axpy, dot, gemv_acc, gemv_t_acc, matmul_nn_acc, matmul_nt, matmul_tn_acc, outer_acc, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    /// align × decoder hidden
    pub w_s: Tensor<T>,
    /// align × encoder output (2h)
    pub w_h: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn zeros(dec_hidden: usize, enc_out: usize, align: usize) -> Self {
        AttentionParams {
            w_s: Tensor::zeros(&[align, dec_hidden]),
            w_h: Tensor::zeros(&[align, enc_out]),
            v: Tensor::zeros(&[align]),
        }
    }

    pub fn align_dim(&self) -> usize {
        self.v.len()
    }

    pub fn tensors(&self) -> [&Tensor<T>; 3] {
        [&self.w_s, &self.w_h, &self.v]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 3] {
        [&mut self.w_s, &mut self.w_h, &mut self.v]
    }
}

/// `H W_hᵀ`, computed once per encoded sequence (n × align).
pub fn project_keys<T: Scalar>(p: &AttentionParams<T>, h: &Tensor<T>) -> Tensor<T> {
    matmul_nt(h, &p.w_h)
}

#[derive(Debug, Clone)]
pub struct AttentionStep<T> {
    /// tanh activations, n × align; rows at masked positions are unused.
    pub act: Tensor<T>,
    pub alpha: Vec<T>,
    pub context: Vec<T>,
}

fn masked(mask: Option<&[bool]>, j: usize) -> bool {
    mask.is_some_and(|m| m[j])
}

/// Attention weights and context from precomputed keys. `mask[j] == true`
/// excludes position `j`.
pub fn attend<T: Scalar>(
    p: &AttentionParams<T>,
    s_prev: &[T],
    h: &Tensor<T>,
    keys: &Tensor<T>,
    mask: Option<&[bool]>,
) -> Result<AttentionStep<T>> {
    let n = h.rows();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::Shape(format!("mask of length {} for {n} positions", m.len())));
        }
    }
    if (0..n).all(|j| masked(mask, j)) {
        return Err(Error::Invalid("attention with every position masked".into()));
    }
    let a = p.align_dim();
    let mut q = vec![T::zero(); a];
    gemv_acc(&p.w_s, s_prev, &mut q);
    let mut act = Tensor::zeros(&[n, a]);
    let mut energies = vec![T::neg_infinity(); n];
    for j in 0..n {
        if masked(mask, j) {
            continue;
        }
        let row = act.row_mut(j);
        for ((o, &k), &qi) in row.iter_mut().zip(keys.row(j)).zip(&q) {
            *o = (k + qi).tanh();
        }
        energies[j] = dot(row, p.v.data());
    }
    let alpha = softmax_masked(&energies, mask);
    let mut context = vec![T::zero(); h.cols()];
    for (j, &w) in alpha.iter().enumerate() {
        if w != T::zero() {
            axpy(&mut context, w, h.row(j));
        }
    }
    Ok(AttentionStep { act, alpha, context })
}

fn softmax_masked<T: Scalar>(e: &[T], mask: Option<&[bool]>) -> Vec<T> {
    let max = (0..e.len())
        .filter(|&j| !masked(mask, j))
        .map(|j| e[j])
        .fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = (0..e.len())
        .map(|j| if masked(mask, j) { T::zero() } else { (e[j] - max).exp() })
        .collect();
    // Accumulated in f64 so f32 distributions over large vocabularies still sum to 1.
    let sum = T::of(out.iter().map(|&v| Scalar::to_f64(v)).sum::<f64>());
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

/// Attention over encoder states `h` (T × 2h) from decoder state `s_prev`.
pub fn attention<T: Scalar>(
    s_prev: &[T],
    h: &Tensor<T>,
    pad_mask: &[bool],
    p: &AttentionParams<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    if s_prev.len() != p.w_s.cols() || h.cols() != p.w_h.cols() {
        return Err(Error::Shape(format!(
            "attention expects state {} and encoder width {}, got {} and {}",
            p.w_s.cols(),
            p.w_h.cols(),
            s_prev.len(),
            h.cols()
        )));
    }
    let keys = project_keys(p, h);
    let st = attend(p, s_prev, h, &keys, Some(pad_mask))?;
    Ok((st.alpha, st.context))
}

/// Backward from `d_context`. Accumulates parameter gradients into `g`, key
/// gradients into `d_keys` (apply [`keys_backward`] once per sequence), state
/// gradients into `d_h`, and decoder-state gradient into `ds_prev`.
#[allow(clippy::too_many_arguments)]
pub fn attend_backward<T: Scalar>(
    p: &AttentionParams<T>,
    s_prev: &[T],
    h: &Tensor<T>,
    st: &AttentionStep<T>,
    d_context: &[T],
    g: &mut AttentionParams<T>,
    d_keys: &mut Tensor<T>,
    d_h: &mut Tensor<T>,
    ds_prev: &mut [T],
) {
    let n = h.rows();
    let a = p.align_dim();
    let d_alpha: Vec<T> = (0..n)
        .map(|j| if st.alpha[j] == T::zero() { T::zero() } else { dot(d_context, h.row(j)) })
        .collect();
    let mean = st.alpha.iter().zip(&d_alpha).fold(T::zero(), |acc, (&w, &d)| acc + w * d);
    let mut dq = vec![T::zero(); a];
    let mut d_pre = vec![T::zero(); a];
    for j in 0..n {
        let w = st.alpha[j];
        if w == T::zero() {
            continue;
        }
        axpy(d_h.row_mut(j), w, d_context);
        let de = w * (d_alpha[j] - mean);
        let act = st.act.row(j);
        axpy(g.v.data_mut(), de, act);
        for ((dp, &u), &vk) in d_pre.iter_mut().zip(act).zip(p.v.data()) {
            *dp = de * vk * (T::one() - u * u);
        }
        axpy(d_keys.row_mut(j), T::one(), &d_pre);
        axpy(&mut dq, T::one(), &d_pre);
    }
    outer_acc(&mut g.w_s, &dq, s_prev);
    gemv_t_acc(&p.w_s, &dq, ds_prev);
}

/// Pushes accumulated key gradients into `W_h` and the encoder states.
pub fn keys_backward<T: Scalar>(
    p: &AttentionParams<T>,
    h: &Tensor<T>,
    d_keys: &Tensor<T>,
    g: &mut AttentionParams<T>,
    d_h: &mut Tensor<T>,
) {
    matmul_tn_acc(&mut g.w_h, d_keys, h);
    matmul_nn_acc(d_h, d_keys, &p.w_h);
}
