//! Scalar abstraction over `f32`/`f64`.
//!
//! Simulation and training run in `f32` (matching the checkpoint format);
//! gradient verification runs the same code in `f64`.

use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the whole crate is generic over.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssign
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Shorthand for converting an `f64` literal.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    /// Lossy conversion to `f64` (exact for `f32`/`f64`).
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite or NaN converts")
    }

    /// `c = alpha * a.dot(b) + beta * c` for row-major matrices:
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);

    /// `c = alpha * a^T.dot(b) + beta * c` where the stored `a` is `k x m`
    /// row-major (so `a^T` is `m x k`); `b` is `k x n`, `c` is `m x n`.
    fn gemm_tn(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);

    /// `c = alpha * a.dot(b^T) + beta * c` where the stored `b` is `n x k`
    /// row-major (so `b^T` is `k x n`); `a` is `m x k`, `c` is `m x n`.
    fn gemm_nt(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);
}

macro_rules! impl_real {
    ($ty:ty, $gemm:path) => {
        impl Real for $ty {
            fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
                debug_assert_eq!(a.len(), m * k);
                debug_assert_eq!(b.len(), k * n);
                debug_assert_eq!(c.len(), m * n);
                unsafe {
                    $gemm(
                        m, k, n, alpha,
                        a.as_ptr(), k as isize, 1,
                        b.as_ptr(), n as isize, 1,
                        beta,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }

            fn gemm_tn(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
                debug_assert_eq!(a.len(), k * m);
                debug_assert_eq!(b.len(), k * n);
                debug_assert_eq!(c.len(), m * n);
                unsafe {
                    $gemm(
                        m, k, n, alpha,
                        a.as_ptr(), 1, m as isize,
                        b.as_ptr(), n as isize, 1,
                        beta,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }

            fn gemm_nt(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
                debug_assert_eq!(a.len(), m * k);
                debug_assert_eq!(b.len(), n * k);
                debug_assert_eq!(c.len(), m * n);
                unsafe {
                    $gemm(
                        m, k, n, alpha,
                        a.as_ptr(), k as isize, 1,
                        b.as_ptr(), 1, k as isize,
                        beta,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);
