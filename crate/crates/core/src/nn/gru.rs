//! Gated recurrent unit with update gate `z`, reset gate `r` and candidate
//! state, applied as a single cell, over a sequence, and bidirectionally.

use super::tensor::{gemv_acc, gemv_t_acc, matmul_nn_acc, matmul_nt, matmul_tn_acc, outer_acc, sigmoid, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_h: Tensor<T>,
}

pub const GRU_TENSOR_NAMES: [&str; 9] = ["W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h"];

impl<T: Scalar> GruParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Tensor::zeros(&[hidden, input]),
            w_r: Tensor::zeros(&[hidden, input]),
            w_h: Tensor::zeros(&[hidden, input]),
            u_z: Tensor::zeros(&[hidden, hidden]),
            u_r: Tensor::zeros(&[hidden, hidden]),
            u_h: Tensor::zeros(&[hidden, hidden]),
            b_z: Tensor::zeros(&[hidden]),
            b_r: Tensor::zeros(&[hidden]),
            b_h: Tensor::zeros(&[hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    pub fn tensors(&self) -> [&Tensor<T>; 9] {
        [&self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r, &self.b_h]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }

    fn check(&self, input: usize, hidden: usize) -> Result<()> {
        if input != self.input_dim() || hidden != self.hidden_dim() {
            return Err(Error::Shape(format!(
                "GRU expects input {} and hidden {}, got {input} and {hidden}",
                self.input_dim(),
                self.hidden_dim()
            )));
        }
        Ok(())
    }
}

/// Gate pre-activations from the input side, biases included.
#[derive(Debug, Clone)]
pub struct InputProjection<T> {
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub h: Vec<T>,
}

pub fn project_input<T: Scalar>(p: &GruParams<T>, x: &[T]) -> InputProjection<T> {
    let mut z = p.b_z.data().to_vec();
    let mut r = p.b_r.data().to_vec();
    let mut h = p.b_h.data().to_vec();
    gemv_acc(&p.w_z, x, &mut z);
    gemv_acc(&p.w_r, x, &mut r);
    gemv_acc(&p.w_h, x, &mut h);
    InputProjection { z, r, h }
}

/// Everything one step's backward pass needs.
#[derive(Debug, Clone)]
pub struct GruStep<T> {
    pub h_prev: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub cand: Vec<T>,
    pub h: Vec<T>,
}

pub fn step<T: Scalar>(p: &GruParams<T>, proj: &InputProjection<T>, h_prev: &[T]) -> GruStep<T> {
    let n = h_prev.len();
    let mut z = proj.z.clone();
    let mut r = proj.r.clone();
    gemv_acc(&p.u_z, h_prev, &mut z);
    gemv_acc(&p.u_r, h_prev, &mut r);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));
    r.iter_mut().for_each(|v| *v = sigmoid(*v));
    let rh: Vec<T> = r.iter().zip(h_prev).map(|(&a, &b)| a * b).collect();
    let mut cand = proj.h.clone();
    gemv_acc(&p.u_h, &rh, &mut cand);
    cand.iter_mut().for_each(|v| *v = v.tanh());
    let h = (0..n)
        .map(|i| (T::one() - z[i]) * h_prev[i] + z[i] * cand[i])
        .collect();
    GruStep {
        h_prev: h_prev.to_vec(),
        z,
        r,
        cand,
        h,
    }
}

/// One GRU update: `(1 - z) * h_prev + z * tanh(W_h x + U_h (r * h_prev) + b_h)`.
pub fn gru_cell<T: Scalar>(x: &[T], h_prev: &[T], p: &GruParams<T>) -> Result<Vec<T>> {
    p.check(x.len(), h_prev.len())?;
    Ok(step(p, &project_input(p, x), h_prev).h)
}

/// Decoder state update: the cell input is `[y_prev_emb; c]`.
pub fn decoder_step<T: Scalar>(y_prev_emb: &[T], s_prev: &[T], c: &[T], p: &GruParams<T>) -> Result<Vec<T>> {
    let mut x = Vec::with_capacity(y_prev_emb.len() + c.len());
    x.extend_from_slice(y_prev_emb);
    x.extend_from_slice(c);
    gru_cell(&x, s_prev, p)
}

/// Backward through the recurrent half of a step. Accumulates `U` and bias
/// gradients, adds the gradient w.r.t. `h_prev` into `dh_prev`, and returns the
/// gradients of the input-side pre-activations for the caller to push into `W`
/// and `x`.
pub fn step_backward<T: Scalar>(
    p: &GruParams<T>,
    s: &GruStep<T>,
    dh: &[T],
    g: &mut GruParams<T>,
    dh_prev: &mut [T],
) -> InputProjection<T> {
    let n = dh.len();
    let one = T::one();
    let mut da_z = vec![T::zero(); n];
    let mut da_h = vec![T::zero(); n];
    for i in 0..n {
        let dz = dh[i] * (s.cand[i] - s.h_prev[i]);
        da_z[i] = dz * s.z[i] * (one - s.z[i]);
        da_h[i] = dh[i] * s.z[i] * (one - s.cand[i] * s.cand[i]);
        dh_prev[i] += dh[i] * (one - s.z[i]);
    }
    let mut d_rh = vec![T::zero(); n];
    gemv_t_acc(&p.u_h, &da_h, &mut d_rh);
    let mut da_r = vec![T::zero(); n];
    let mut rh = vec![T::zero(); n];
    for i in 0..n {
        da_r[i] = d_rh[i] * s.h_prev[i] * s.r[i] * (one - s.r[i]);
        dh_prev[i] += d_rh[i] * s.r[i];
        rh[i] = s.r[i] * s.h_prev[i];
    }
    gemv_t_acc(&p.u_z, &da_z, dh_prev);
    gemv_t_acc(&p.u_r, &da_r, dh_prev);
    outer_acc(&mut g.u_z, &da_z, &s.h_prev);
    outer_acc(&mut g.u_r, &da_r, &s.h_prev);
    outer_acc(&mut g.u_h, &da_h, &rh);
    super::tensor::axpy(g.b_z.data_mut(), one, &da_z);
    super::tensor::axpy(g.b_r.data_mut(), one, &da_r);
    super::tensor::axpy(g.b_h.data_mut(), one, &da_h);
    InputProjection { z: da_z, r: da_r, h: da_h }
}

/// Full single-step backward: returns `dx` and accumulates into `dh_prev`.
pub fn cell_backward<T: Scalar>(
    p: &GruParams<T>,
    x: &[T],
    s: &GruStep<T>,
    dh: &[T],
    g: &mut GruParams<T>,
    dh_prev: &mut [T],
) -> Vec<T> {
    let da = step_backward(p, s, dh, g, dh_prev);
    outer_acc(&mut g.w_z, &da.z, x);
    outer_acc(&mut g.w_r, &da.r, x);
    outer_acc(&mut g.w_h, &da.h, x);
    let mut dx = vec![T::zero(); x.len()];
    gemv_t_acc(&p.w_z, &da.z, &mut dx);
    gemv_t_acc(&p.w_r, &da.r, &mut dx);
    gemv_t_acc(&p.w_h, &da.h, &mut dx);
    dx
}

/// A unidirectional pass over the rows of an input matrix.
#[derive(Debug, Clone)]
pub struct SequenceTrace<T> {
    /// Steps in processing order (reversed time when `reverse`).
    pub steps: Vec<GruStep<T>>,
    pub reverse: bool,
}

impl<T: Scalar> SequenceTrace<T> {
    /// Output state at time index `t`.
    pub fn state_at(&self, t: usize) -> &[T] {
        let n = self.steps.len();
        let k = if self.reverse { n - 1 - t } else { t };
        &self.steps[k].h
    }

    /// State after consuming the whole sequence.
    pub fn final_state(&self) -> &[T] {
        &self.steps.last().expect("non-empty sequence").h
    }
}

/// Runs the GRU from a zero state over the rows of `x` (n×input).
pub fn run_sequence<T: Scalar>(p: &GruParams<T>, x: &Tensor<T>, reverse: bool) -> Result<SequenceTrace<T>> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::Invalid("GRU over an empty sequence".into()));
    }
    p.check(x.cols(), p.hidden_dim())?;
    let hidden = p.hidden_dim();
    let pz = matmul_nt(x, &p.w_z);
    let pr = matmul_nt(x, &p.w_r);
    let ph = matmul_nt(x, &p.w_h);
    let mut h = vec![T::zero(); hidden];
    let mut steps = Vec::with_capacity(n);
    for k in 0..n {
        let t = if reverse { n - 1 - k } else { k };
        let add_bias = |row: &[T], b: &Tensor<T>| -> Vec<T> { row.iter().zip(b.data()).map(|(&a, &b)| a + b).collect() };
        let proj = InputProjection {
            z: add_bias(pz.row(t), &p.b_z),
            r: add_bias(pr.row(t), &p.b_r),
            h: add_bias(ph.row(t), &p.b_h),
        };
        let s = step(p, &proj, &h);
        h.clone_from(&s.h);
        steps.push(s);
    }
    Ok(SequenceTrace { steps, reverse })
}

/// Backpropagation through time. `d_out` holds the loss gradient w.r.t. the
/// output state at every time index (n×hidden). Returns the gradient w.r.t. `x`.
pub fn run_sequence_backward<T: Scalar>(
    p: &GruParams<T>,
    x: &Tensor<T>,
    trace: &SequenceTrace<T>,
    d_out: &Tensor<T>,
    g: &mut GruParams<T>,
) -> Tensor<T> {
    let n = x.rows();
    let hidden = p.hidden_dim();
    let mut da_z = Tensor::zeros(&[n, hidden]);
    let mut da_r = Tensor::zeros(&[n, hidden]);
    let mut da_h = Tensor::zeros(&[n, hidden]);
    let mut carry = vec![T::zero(); hidden];
    for k in (0..n).rev() {
        let t = if trace.reverse { n - 1 - k } else { k };
        let dh: Vec<T> = carry.iter().zip(d_out.row(t)).map(|(&a, &b)| a + b).collect();
        let mut dh_prev = vec![T::zero(); hidden];
        let da = step_backward(p, &trace.steps[k], &dh, g, &mut dh_prev);
        da_z.row_mut(t).copy_from_slice(&da.z);
        da_r.row_mut(t).copy_from_slice(&da.r);
        da_h.row_mut(t).copy_from_slice(&da.h);
        carry = dh_prev;
    }
    matmul_tn_acc(&mut g.w_z, &da_z, x);
    matmul_tn_acc(&mut g.w_r, &da_r, x);
    matmul_tn_acc(&mut g.w_h, &da_h, x);
    let mut dx = Tensor::zeros(&[n, x.cols()]);
    matmul_nn_acc(&mut dx, &da_z, &p.w_z);
    matmul_nn_acc(&mut dx, &da_r, &p.w_r);
    matmul_nn_acc(&mut dx, &da_h, &p.w_h);
    dx
}

/// Forward and backward traces of one bidirectional layer.
#[derive(Debug, Clone)]
pub struct BiTrace<T> {
    pub fwd: SequenceTrace<T>,
    pub bwd: SequenceTrace<T>,
}

impl<T: Scalar> BiTrace<T> {
    /// n×2h: row t is `[forward state at t; backward state at t]`.
    pub fn outputs(&self) -> Tensor<T> {
        let n = self.fwd.steps.len();
        let h = self.fwd.steps[0].h.len();
        let mut out = Tensor::zeros(&[n, 2 * h]);
        for t in 0..n {
            let row = out.row_mut(t);
            row[..h].copy_from_slice(self.fwd.state_at(t));
            row[h..].copy_from_slice(self.bwd.state_at(t));
        }
        out
    }

    /// `[forward state after x_n; backward state after x_1]`.
    pub fn final_states(&self) -> Vec<T> {
        let mut v = self.fwd.final_state().to_vec();
        v.extend_from_slice(self.bwd.final_state());
        v
    }
}

pub fn bigru_trace<T: Scalar>(x: &Tensor<T>, fwd: &GruParams<T>, bwd: &GruParams<T>) -> Result<BiTrace<T>> {
    Ok(BiTrace {
        fwd: run_sequence(fwd, x, false)?,
        bwd: run_sequence(bwd, x, true)?,
    })
}

/// Bidirectional encoding of the rows of `x`; returns n×2h.
pub fn bigru_encode<T: Scalar>(x: &Tensor<T>, fwd: &GruParams<T>, bwd: &GruParams<T>) -> Result<Tensor<T>> {
    Ok(bigru_trace(x, fwd, bwd)?.outputs())
}

/// Backward through a bidirectional layer. `d_out` is n×2h.
pub fn bigru_backward<T: Scalar>(
    x: &Tensor<T>,
    fwd: &GruParams<T>,
    bwd: &GruParams<T>,
    trace: &BiTrace<T>,
    d_out: &Tensor<T>,
    g_fwd: &mut GruParams<T>,
    g_bwd: &mut GruParams<T>,
) -> Tensor<T> {
    let n = x.rows();
    let h = fwd.hidden_dim();
    let mut d_f = Tensor::zeros(&[n, h]);
    let mut d_b = Tensor::zeros(&[n, h]);
    for t in 0..n {
        d_f.row_mut(t).copy_from_slice(&d_out.row(t)[..h]);
        d_b.row_mut(t).copy_from_slice(&d_out.row(t)[h..]);
    }
    let mut dx = run_sequence_backward(fwd, x, &trace.fwd, &d_f, g_fwd);
    dx.add_assign(&run_sequence_backward(bwd, x, &trace.bwd, &d_b, g_bwd));
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> GruParams<f64> {
        let mut p = GruParams::zeros(input, hidden);
        for t in p.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        p
    }

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect()
    }

    /// Scalar-loop recomputation of the cell, written independently of the kernels.
    fn cell_oracle(x: &[f64], h: &[f64], p: &GruParams<f64>) -> Vec<f64> {
        let hid = h.len();
        let inp = x.len();
        let m = |w: &Tensor<f64>, i: usize, j: usize, c: usize| w.data()[i * c + j];
        let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
        let mut z = vec![0.0; hid];
        let mut r = vec![0.0; hid];
        for i in 0..hid {
            let mut az = p.b_z.data()[i];
            let mut ar = p.b_r.data()[i];
            for j in 0..inp {
                az += m(&p.w_z, i, j, inp) * x[j];
                ar += m(&p.w_r, i, j, inp) * x[j];
            }
            for j in 0..hid {
                az += m(&p.u_z, i, j, hid) * h[j];
                ar += m(&p.u_r, i, j, hid) * h[j];
            }
            z[i] = sig(az);
            r[i] = sig(ar);
        }
        (0..hid)
            .map(|i| {
                let mut a = p.b_h.data()[i];
                for j in 0..inp {
                    a += m(&p.w_h, i, j, inp) * x[j];
                }
                for j in 0..hid {
                    a += m(&p.u_h, i, j, hid) * r[j] * h[j];
                }
                (1.0 - z[i]) * h[i] + z[i] * a.tanh()
            })
            .collect()
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::<f64>::zeros(3, 4);
        let h = vec![0.2, -0.4, 0.6, -0.8];
        let out = gru_cell(&[1.0, 2.0, 3.0], &h, &p).unwrap();
        for (o, hv) in out.iter().zip(&h) {
            assert!((o - 0.5 * hv).abs() < 1e-15);
        }
        let out = gru_cell(&[1.0, 2.0, 3.0], &[0.0; 4], &p).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cell_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let p = random_params(5, 4, &mut rng);
            let x = rand_vec(5, &mut rng);
            let h = rand_vec(4, &mut rng);
            let got = gru_cell(&x, &h, &p).unwrap();
            let want = cell_oracle(&x, &h, &p);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
                assert!(a.abs() < 1.0);
            }
        }
    }

    #[test]
    fn zero_state_zero_bias_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = random_params(3, 3, &mut rng);
        for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h] {
            b.fill(0.0);
        }
        let x = rand_vec(3, &mut rng);
        let out = gru_cell(&x, &[0.0; 3], &p).unwrap();
        for i in 0..3 {
            let az: f64 = (0..3).map(|j| p.w_z.row(i)[j] * x[j]).sum();
            let ah: f64 = (0..3).map(|j| p.w_h.row(i)[j] * x[j]).sum();
            let z = 1.0 / (1.0 + (-az).exp());
            assert!((out[i] - z * ah.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn decoder_step_concatenates_inputs() {
        let p = GruParams::<f64>::zeros(5, 2);
        let s = decoder_step(&[1.0, 2.0], &[0.4, -0.2], &[1.0, 1.0, 1.0], &p).unwrap();
        assert_eq!(s, vec![0.2, -0.1]);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_params(5, 3, &mut rng);
        let s_prev = rand_vec(3, &mut rng);
        let zero = decoder_step(&[0.0; 2], &s_prev, &[0.0; 3], &p).unwrap();
        assert_eq!(zero, gru_cell(&[0.0; 5], &s_prev, &p).unwrap());

        let y = rand_vec(2, &mut rng);
        let c = rand_vec(3, &mut rng);
        let got = decoder_step(&y, &s_prev, &c, &p).unwrap();
        let want = cell_oracle(&[y, c].concat(), &s_prev, &p);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(decoder_step(&[0.0; 3], &s_prev, &[0.0; 3], &p).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = GruParams::<f64>::zeros(3, 4);
        assert!(matches!(gru_cell(&[0.0; 2], &[0.0; 4], &p), Err(Error::Shape(_))));
        assert!(gru_cell(&[0.0; 3], &[0.0; 5], &p).is_err());
    }

    #[test]
    fn bigru_matches_two_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fwd = random_params(4, 3, &mut rng);
        let bwd = random_params(4, 3, &mut rng);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(4, &mut rng)).collect();
        let x = Tensor::from_vec(&[3, 4], rows.concat()).unwrap();
        let h = bigru_encode(&x, &fwd, &bwd).unwrap();
        assert_eq!(h.shape(), &[3, 6]);

        let mut f = vec![vec![0.0; 3]; 3];
        let mut state = vec![0.0; 3];
        for t in 0..3 {
            state = cell_oracle(&rows[t], &state, &fwd);
            f[t] = state.clone();
        }
        let mut b = vec![vec![0.0; 3]; 3];
        let mut state = vec![0.0; 3];
        for t in (0..3).rev() {
            state = cell_oracle(&rows[t], &state, &bwd);
            b[t] = state.clone();
        }
        for t in 0..3 {
            for i in 0..3 {
                assert!((h.row(t)[i] - f[t][i]).abs() < 1e-12);
                assert!((h.row(t)[3 + i] - b[t][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_step_bigru() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fwd = random_params(2, 2, &mut rng);
        let bwd = random_params(2, 2, &mut rng);
        let x = Tensor::from_vec(&[1, 2], vec![0.3, -0.7]).unwrap();
        let h = bigru_encode(&x, &fwd, &bwd).unwrap();
        let f = gru_cell(x.row(0), &[0.0; 2], &fwd).unwrap();
        let b = gru_cell(x.row(0), &[0.0; 2], &bwd).unwrap();
        assert_eq!(h.row(0), [f, b].concat().as_slice());
        assert!(bigru_encode(&Tensor::<f64>::zeros(&[0, 2]), &fwd, &bwd).is_err());
    }

    #[test]
    fn palindrome_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = random_params(3, 2, &mut rng);
        let a = rand_vec(3, &mut rng);
        let b = rand_vec(3, &mut rng);
        let x = Tensor::from_vec(&[3, 3], [a.clone(), b, a].concat()).unwrap();
        let h = bigru_encode(&x, &p, &p).unwrap();
        for t in 0..3 {
            let mirror = 2 - t;
            for i in 0..2 {
                assert!((h.row(t)[i] - h.row(mirror)[2 + i]).abs() < 1e-14);
            }
        }
    }

    /// Finite-difference check of the sequence backward pass for L = Σ c·H.
    #[test]
    fn sequence_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let fwd = random_params(3, 2, &mut rng);
        let bwd = random_params(3, 2, &mut rng);
        let x = Tensor::from_vec(&[4, 3], rand_vec(12, &mut rng)).unwrap();
        let weights = Tensor::from_vec(&[4, 4], rand_vec(16, &mut rng)).unwrap();
        let loss = |x: &Tensor<f64>, f: &GruParams<f64>, b: &GruParams<f64>| -> f64 {
            let h = bigru_encode(x, f, b).unwrap();
            h.data().iter().zip(weights.data()).map(|(a, w)| a * w).sum()
        };
        let trace = bigru_trace(&x, &fwd, &bwd).unwrap();
        let mut gf = GruParams::zeros(3, 2);
        let mut gb = GruParams::zeros(3, 2);
        let dx = bigru_backward(&x, &fwd, &bwd, &trace, &weights, &mut gf, &mut gb);
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let num = (loss(&xp, &fwd, &bwd) - loss(&xm, &fwd, &bwd)) / (2.0 * eps);
            assert!((num - dx.data()[i]).abs() < 1e-7, "dx[{i}]: {num} vs {}", dx.data()[i]);
        }
        for k in 0..9 {
            for i in 0..fwd.tensors()[k].len() {
                let mut fp = fwd.clone();
                fp.tensors_mut()[k].data_mut()[i] += eps;
                let mut fm = fwd.clone();
                fm.tensors_mut()[k].data_mut()[i] -= eps;
                let num = (loss(&x, &fp, &bwd) - loss(&x, &fm, &bwd)) / (2.0 * eps);
                let ana = gf.tensors()[k].data()[i];
                assert!((num - ana).abs() < 1e-7, "{}[{i}]: {num} vs {ana}", GRU_TENSOR_NAMES[k]);
            }
        }
    }
}
