//! Scalar abstraction and the dense kernels the model is built from.
//!
//! Matrices are row-major. Weight matrices are stored input-major
//! (`[in, out]`), so a linear layer is `y = x · W + b`.

use alloc::borrow::Cow;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Floating-point type the forward and backward passes are generic over.
///
/// Training runs in `f32`; scoring and gradient checking run in `f64`.
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;

    /// View `f32` parameter storage at this precision.
    fn load(params: &[f32]) -> Cow<'_, [Self]>;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::logf(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanhf(self)
    }
    fn load(params: &[f32]) -> Cow<'_, [Self]> {
        Cow::Borrowed(params)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    fn load(params: &[f32]) -> Cow<'_, [Self]> {
        Cow::Owned(params.iter().map(|&p| p as f64).collect())
    }
}

/// `y += a * x`
#[inline]
pub fn axpy<F: Scalar>(y: &mut [F], a: F, x: &[F]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulators. The summation order is
/// fixed, so results are reproducible bit for bit.
#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::ZERO; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = F::ZERO;
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y[t] = b + x[t] · W` for every row `t`; `w` is `[inp, out]`.
pub fn linear<F: Scalar>(x: &[F], w: &[F], b: Option<&[F]>, inp: usize, out: usize) -> Vec<F> {
    let rows = x.len() / inp;
    let mut y = alloc::vec![F::ZERO; rows * out];
    for (xr, yr) in x.chunks_exact(inp).zip(y.chunks_exact_mut(out)) {
        if let Some(b) = b {
            yr.copy_from_slice(b);
        }
        for (i, &xi) in xr.iter().enumerate() {
            axpy(yr, xi, &w[i * out..(i + 1) * out]);
        }
    }
    y
}

/// `dw += xᵀ · dy`
pub fn linear_dw<F: Scalar>(x: &[F], dy: &[F], inp: usize, out: usize, dw: &mut [F]) {
    for (xr, dyr) in x.chunks_exact(inp).zip(dy.chunks_exact(out)) {
        for (i, &xi) in xr.iter().enumerate() {
            axpy(&mut dw[i * out..(i + 1) * out], xi, dyr);
        }
    }
}

/// `db += Σ_t dy[t]`
pub fn bias_grad<F: Scalar>(dy: &[F], out: usize, db: &mut [F]) {
    for dyr in dy.chunks_exact(out) {
        for (d, &g) in db.iter_mut().zip(dyr) {
            *d += g;
        }
    }
}

/// `dx = dy · Wᵀ`
pub fn linear_dx<F: Scalar>(w: &[F], dy: &[F], inp: usize, out: usize) -> Vec<F> {
    let rows = dy.len() / out;
    let mut dx = alloc::vec![F::ZERO; rows * inp];
    for (dxr, dyr) in dx.chunks_exact_mut(inp).zip(dy.chunks_exact(out)) {
        for (i, d) in dxr.iter_mut().enumerate() {
            *d = dot(dyr, &w[i * out..(i + 1) * out]);
        }
    }
    dx
}

pub const LN_EPS: f64 = 1e-5;

/// Saved statistics of a layer-norm application, per row.
pub struct NormCache<F> {
    pub xhat: Vec<F>,
    pub rstd: Vec<F>,
}

pub fn layer_norm<F: Scalar>(x: &[F], gain: &[F], bias: &[F], dim: usize) -> (Vec<F>, NormCache<F>) {
    let rows = x.len() / dim;
    let inv_dim = F::of(1.0 / dim as f64);
    let eps = F::of(LN_EPS);
    let mut y = alloc::vec![F::ZERO; x.len()];
    let mut xhat = alloc::vec![F::ZERO; x.len()];
    let mut rstd = alloc::vec![F::ZERO; rows];
    for r in 0..rows {
        let xr = &x[r * dim..(r + 1) * dim];
        let mut mean = F::ZERO;
        for &v in xr {
            mean += v;
        }
        mean *= inv_dim;
        let mut var = F::ZERO;
        for &v in xr {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_dim;
        let rs = F::ONE / (var + eps).sqrt();
        rstd[r] = rs;
        for j in 0..dim {
            let h = (xr[j] - mean) * rs;
            xhat[r * dim + j] = h;
            y[r * dim + j] = h * gain[j] + bias[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

/// `dparams`, when given, is the gain gradient followed by the bias gradient.
pub fn layer_norm_backward<F: Scalar>(
    dy: &[F],
    cache: &NormCache<F>,
    gain: &[F],
    dim: usize,
    mut dparams: Option<&mut [F]>,
) -> Vec<F> {
    let rows = dy.len() / dim;
    let inv_dim = F::of(1.0 / dim as f64);
    let mut dx = alloc::vec![F::ZERO; dy.len()];
    for r in 0..rows {
        let dyr = &dy[r * dim..(r + 1) * dim];
        let xh = &cache.xhat[r * dim..(r + 1) * dim];
        if let Some(dp) = dparams.as_deref_mut() {
            let (dg, db) = dp.split_at_mut(dim);
            for j in 0..dim {
                dg[j] += dyr[j] * xh[j];
                db[j] += dyr[j];
            }
        }
        let mut sum_g = F::ZERO;
        let mut sum_gx = F::ZERO;
        for j in 0..dim {
            let g = dyr[j] * gain[j];
            sum_g += g;
            sum_gx += g * xh[j];
        }
        let rs = cache.rstd[r];
        for j in 0..dim {
            let g = dyr[j] * gain[j];
            dx[r * dim + j] = rs * (g - inv_dim * sum_g - xh[j] * inv_dim * sum_gx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu<F: Scalar>(x: F) -> F {
    let inner = F::of(GELU_C) * (x + F::of(GELU_A) * x * x * x);
    F::of(0.5) * x * (F::ONE + inner.tanh())
}

#[inline]
pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::of(GELU_C);
    let a = F::of(GELU_A);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let sech2 = F::ONE - t * t;
    F::of(0.5) * (F::ONE + t) + F::of(0.5) * x * sech2 * c * (F::ONE + F::of(3.0) * a * x * x)
}

/// In-place log-softmax over one row; returns nothing, row becomes log-probabilities.
pub fn log_softmax_inplace<F: Scalar>(row: &mut [F]) {
    let mut max = row[0];
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = F::ZERO;
    for &v in row.iter() {
        sum += (v - max).exp();
    }
    let lse = max + sum.ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

/// In-place softmax over one row.
pub fn softmax_inplace<F: Scalar>(row: &mut [F]) {
    let mut max = row[0];
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = F::ZERO;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = F::ONE / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}
