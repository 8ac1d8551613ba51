//! Rotation-symmetric cell perception.
//!
//! Each cell perceives its own state concatenated with the per-channel
//! response of a fixed 3x3 Laplacian stencil. The stencil is invariant under
//! all eight square symmetries, which is what makes the whole update rule
//! isotropic. A fixed-point variant accumulates the 9-tap sum in integers so
//! the result is exactly associative: it cannot leak symmetry-breaking float
//! noise into a synchronous rollout.

use alloc::vec::Vec;

use crate::grid::Grid;
use crate::real::Real;

/// The 3x3 Laplacian stencil. Weights sum to 0 and the matrix is invariant
/// under every symmetry of the square.
pub const LAPLACIAN: [[i32; 3]; 3] = [[1, 2, 1], [2, -12, 2], [1, 2, 1]];

/// Numeric regime for the stencil accumulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Numerics {
    /// Floating point, taps accumulated in a fixed row-major order.
    /// Reproducible on one platform; not bitwise symmetric.
    Float,
    /// States quantized to `frac_bits` fractional bits, taps summed in
    /// integers. Bitwise identical under any visit order or D4 transform.
    Fixed { frac_bits: u32 },
}

impl Numerics {
    pub const DEFAULT_FRAC_BITS: u32 = 16;

    pub fn fixed_default() -> Self {
        Numerics::Fixed { frac_bits: Self::DEFAULT_FRAC_BITS }
    }
}

/// A state magnitude too large for the fixed-point representation.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointOverflow {
    pub row: usize,
    pub col: usize,
    pub channel: usize,
    pub value: f64,
    pub limit: f64,
}

impl core::fmt::Display for FixedPointOverflow {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "state {} at ({}, {}, ch {}) exceeds fixed-point limit {}",
            self.value, self.row, self.col, self.channel, self.limit
        )
    }
}

impl core::error::Error for FixedPointOverflow {}

/// Per-channel 3x3 Laplacian with zero boundary, float accumulation.
///
/// The taps are added in row-major stencil order, so results are reproducible
/// on a single platform (but not bitwise invariant under grid symmetries).
pub fn laplacian_conv<T: Real>(grid: &Grid<T>) -> Grid<T> {
    let (h, w, c) = (grid.height(), grid.width(), grid.channels());
    let mut out = Grid::zeros(h, w, c);
    let kernel: [[T; 3]; 3] = LAPLACIAN.map(|row| row.map(|k| T::of(k as f64)));
    let data = grid.data();
    for r in 0..h {
        for col in 0..w {
            let dst = (r * w + col) * c;
            for (dr, krow) in kernel.iter().enumerate() {
                let rr = r as i64 + dr as i64 - 1;
                if rr < 0 || rr >= h as i64 {
                    continue;
                }
                for (dc, &wgt) in krow.iter().enumerate() {
                    let cc = col as i64 + dc as i64 - 1;
                    if cc < 0 || cc >= w as i64 {
                        continue;
                    }
                    let src = (rr as usize * w + cc as usize) * c;
                    let orow = &mut out.data_mut()[dst..dst + c];
                    for (o, i) in orow.iter_mut().zip(&data[src..src + c]) {
                        *o = *o + wgt * *i;
                    }
                }
            }
        }
    }
    out
}

/// Quantize a grid to `frac_bits` fractional bits, checking the headroom
/// bound `|x| < 2^(31 - frac_bits - 4)`.
fn quantize<T: Real>(grid: &Grid<T>, frac_bits: u32) -> Result<Vec<i32>, FixedPointOverflow> {
    let scale = (1i64 << frac_bits) as f64;
    let limit = (1i64 << (31 - frac_bits as i64 - 4)) as f64;
    let (w, c) = (grid.width(), grid.channels());
    let mut q = Vec::with_capacity(grid.data().len());
    for (i, v) in grid.data().iter().enumerate() {
        let x = v.to_f64_lossy();
        if !(x.abs() < limit) {
            let cell = i / c;
            return Err(FixedPointOverflow {
                row: cell / w,
                col: cell % w,
                channel: i % c,
                value: x,
                limit,
            });
        }
        q.push(num_traits::Float::round(x * scale) as i32);
    }
    Ok(q)
}

/// Per-channel 3x3 Laplacian computed on `frac_bits` fixed-point states.
///
/// The 9-term weighted sum is accumulated in integers, so the output is
/// bitwise identical under any cell-visit order and under any D4 transform of
/// a D4-symmetric input.
pub fn laplacian_conv_fixed_point<T: Real>(
    grid: &Grid<T>,
    frac_bits: u32,
) -> Result<Grid<T>, FixedPointOverflow> {
    let (h, w, c) = (grid.height(), grid.width(), grid.channels());
    let q = quantize(grid, frac_bits)?;
    let inv_scale = T::of(1.0 / (1i64 << frac_bits) as f64);
    let mut out = Grid::zeros(h, w, c);
    for r in 0..h {
        for col in 0..w {
            let dst = (r * w + col) * c;
            for ch in 0..c {
                let mut acc: i64 = 0;
                for (dr, krow) in LAPLACIAN.iter().enumerate() {
                    let rr = r as i64 + dr as i64 - 1;
                    if rr < 0 || rr >= h as i64 {
                        continue;
                    }
                    for (dc, &k) in krow.iter().enumerate() {
                        let cc = col as i64 + dc as i64 - 1;
                        if cc < 0 || cc >= w as i64 {
                            continue;
                        }
                        acc += k as i64 * q[(rr as usize * w + cc as usize) * c + ch] as i64;
                    }
                }
                out.data_mut()[dst + ch] = T::of(acc as f64) * inv_scale;
            }
        }
    }
    Ok(out)
}

/// Build the 2C-channel perception field: channels `[0, C)` are the state
/// itself, channels `[C, 2C)` the per-channel Laplacian response.
pub fn perceive<T: Real>(
    grid: &Grid<T>,
    numerics: Numerics,
) -> Result<Grid<T>, FixedPointOverflow> {
    let lap = match numerics {
        Numerics::Float => laplacian_conv(grid),
        Numerics::Fixed { frac_bits } => laplacian_conv_fixed_point(grid, frac_bits)?,
    };
    Ok(grid.concat_channels(&lap))
}
