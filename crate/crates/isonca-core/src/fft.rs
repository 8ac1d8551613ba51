//! Minimal power-of-two complex FFT.
//!
//! The loss pipeline only ever transforms theta rows whose length is a power
//! of two, so an iterative radix-2 Cooley-Tukey covers everything. The direct
//! O(n^2) correlation oracle in the tests keeps this honest.

use alloc::vec::Vec;

use crate::real::Real;

/// Complex value over the crate scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cplx<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> Cplx<T> {
    #[inline]
    pub fn new(re: T, im: T) -> Self {
        Self { re, im }
    }

    #[inline]
    pub fn zero() -> Self {
        Self { re: T::zero(), im: T::zero() }
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    #[inline]
    pub fn mul(self, other: Self) -> Self {
        Self {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    #[inline]
    pub fn add(self, other: Self) -> Self {
        Self { re: self.re + other.re, im: self.im + other.im }
    }

    #[inline]
    pub fn sub(self, other: Self) -> Self {
        Self { re: self.re - other.re, im: self.im - other.im }
    }
}

/// In-place radix-2 FFT. `buf.len()` must be a power of two. The inverse
/// transform includes the `1/n` scale.
pub fn fft<T: Real>(buf: &mut [Cplx<T>], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * core::f64::consts::TAU / len as f64;
        use num_traits::Float;
        let wlen = Cplx::new(T::of(Float::cos(ang)), T::of(Float::sin(ang)));
        let mut i = 0;
        while i < n {
            let mut w = Cplx::new(T::one(), T::zero());
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2].mul(w);
                buf[i + k] = u.add(v);
                buf[i + k + len / 2] = u.sub(v);
                w = w.mul(wlen);
            }
            i += len;
        }
        len <<= 1;
    }
    if inverse {
        let scale = T::one() / T::of(n as f64);
        for v in buf.iter_mut() {
            v.re = v.re * scale;
            v.im = v.im * scale;
        }
    }
}

/// Forward FFT of a real signal.
pub fn fft_real<T: Real>(signal: &[T]) -> Vec<Cplx<T>> {
    let mut buf: Vec<Cplx<T>> = signal.iter().map(|v| Cplx::new(*v, T::zero())).collect();
    fft(&mut buf, false);
    buf
}
