use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssign};

use crate::{Error, Result};

/// Floating-point element type of the numerical core. Training runs in
/// `f32`; gradient checking runs the same code in `f64`.
pub trait Scalar: Float + NumAssign + Default + Debug + Display + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C = alpha * A @ B + beta * C` with arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: callers pass slices whose extents cover every
                // strided access; see the checked wrappers below.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Self::zeros(&other.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Row width; the product of all but the leading dimension.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        axpy(&mut self.data, T::one(), &other.data);
    }

    pub fn scale(&mut self, a: T) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

pub fn ensure_finite_slice<T: Scalar>(v: &[T], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out += W x` for `W` of shape rows×cols.
pub fn gemv_acc<T: Scalar>(w: &Tensor<T>, x: &[T], out: &mut [T]) {
    debug_assert_eq!(w.cols(), x.len());
    debug_assert_eq!(w.rows(), out.len());
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(w.row(i), x);
    }
}

/// `out += Wᵀ y`
pub fn gemv_t_acc<T: Scalar>(w: &Tensor<T>, y: &[T], out: &mut [T]) {
    debug_assert_eq!(w.rows(), y.len());
    debug_assert_eq!(w.cols(), out.len());
    for (i, &yi) in y.iter().enumerate() {
        if yi != T::zero() {
            axpy(out, yi, w.row(i));
        }
    }
}

/// `g += y xᵀ`
pub fn outer_acc<T: Scalar>(g: &mut Tensor<T>, y: &[T], x: &[T]) {
    debug_assert_eq!(g.rows(), y.len());
    debug_assert_eq!(g.cols(), x.len());
    for (i, &yi) in y.iter().enumerate() {
        if yi != T::zero() {
            axpy(g.row_mut(i), yi, x);
        }
    }
}

/// `A Bᵀ` for `A` m×k and `B` n×k.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    assert_eq!(b.cols(), k, "matmul_nt inner dimension");
    let mut c = Tensor::zeros(&[m, n]);
    T::gemm(
        m,
        k,
        n,
        T::one(),
        a.data(),
        k as isize,
        1,
        b.data(),
        1,
        k as isize,
        T::zero(),
        c.data_mut(),
        n as isize,
        1,
    );
    c
}

/// `C += Aᵀ B` for `A` m×n and `B` m×k, giving n×k.
pub fn matmul_tn_acc<T: Scalar>(c: &mut Tensor<T>, a: &Tensor<T>, b: &Tensor<T>) {
    let (m, n, k) = (a.rows(), a.cols(), b.cols());
    assert_eq!(b.rows(), m, "matmul_tn_acc outer dimension");
    assert_eq!((c.rows(), c.cols()), (n, k), "matmul_tn_acc output");
    T::gemm(
        n,
        m,
        k,
        T::one(),
        a.data(),
        1,
        n as isize,
        b.data(),
        k as isize,
        1,
        T::one(),
        c.data_mut(),
        k as isize,
        1,
    );
}

/// `C += A B` for `A` m×n and `B` n×k.
pub fn matmul_nn_acc<T: Scalar>(c: &mut Tensor<T>, a: &Tensor<T>, b: &Tensor<T>) {
    let (m, n, k) = (a.rows(), a.cols(), b.cols());
    assert_eq!(b.rows(), n, "matmul_nn_acc inner dimension");
    assert_eq!((c.rows(), c.cols()), (m, k), "matmul_nn_acc output");
    T::gemm(
        m,
        n,
        k,
        T::one(),
        a.data(),
        n as isize,
        1,
        b.data(),
        k as isize,
        1,
        T::one(),
        c.data_mut(),
        k as isize,
        1,
    );
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
