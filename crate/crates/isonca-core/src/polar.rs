//! Polar resampling and image-plane rotations.
//!
//! The invariant loss compares patterns in polar coordinates, where an
//! unknown rotation becomes a circular shift along the angle axis. Angle
//! conventions are fixed once here: [`rotate_image`] by a positive angle
//! shifts the polar transform forward (toward higher theta bins), one bin per
//! `2*pi/n_theta`.

use alloc::vec::Vec;

use num_traits::Float;

use crate::grid::Grid;
use crate::real::Real;

/// A pattern resampled on an `n_r x n_theta` polar grid.
///
/// Rows (fixed radius) are contiguous per channel, ready for the FFT along
/// theta. Radius samples live on `(0, r_max]`; angle samples on `[0, 2*pi)`.
#[derive(Clone, Debug)]
pub struct PolarImage<T> {
    n_r: usize,
    n_theta: usize,
    channels: usize,
    /// Layout: `[(r * channels + ch) * n_theta + theta]`.
    data: Vec<T>,
    pub center: (f64, f64),
    pub r_max: f64,
}

impl<T: Real> PolarImage<T> {
    /// Wrap an existing polar buffer (layout `[(r * channels + ch) * n_theta + theta]`).
    pub fn from_raw(n_r: usize, n_theta: usize, channels: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n_r * n_theta * channels);
        Self {
            n_r,
            n_theta,
            channels,
            data,
            center: (0.0, 0.0),
            r_max: n_r as f64,
        }
    }

    #[inline]
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    #[inline]
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Contiguous theta row at fixed `(radius index, channel)`.
    #[inline]
    pub fn row(&self, r: usize, ch: usize) -> &[T] {
        let base = (r * self.channels + ch) * self.n_theta;
        &self.data[base..base + self.n_theta]
    }

    #[inline]
    pub fn get(&self, r: usize, theta: usize, ch: usize) -> T {
        self.data[(r * self.channels + ch) * self.n_theta + theta]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

/// Bilinear sample at continuous position (`y` row, `x` col); positions
/// outside the image read 0.
pub fn bilinear<T: Real>(img: &Grid<T>, y: f64, x: f64, ch: usize) -> T {
    let (h, w) = (img.height() as i64, img.width() as i64);
    let x0 = Float::floor(x) as i64;
    let y0 = Float::floor(y) as i64;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let mut acc = T::zero();
    for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
            let (yy, xx) = (y0 + dy, x0 + dx);
            let weight = wy * wx;
            if weight != 0.0 && yy >= 0 && xx >= 0 && yy < h && xx < w {
                acc += T::of(weight) * img.get(yy as usize, xx as usize, ch);
            }
        }
    }
    acc
}

/// Geometric center of a grid in pixel coordinates.
#[inline]
pub fn image_center<T: Real>(img: &Grid<T>) -> (f64, f64) {
    ((img.height() as f64 - 1.0) / 2.0, (img.width() as f64 - 1.0) / 2.0)
}

/// Resample onto a polar grid. Radii are `(i+1)/n_r * r_max`; angles
/// `2*pi*j/n_theta`. When `area_weighted`, each radius row is scaled by
/// `sqrt(r/r_max)` so sums over polar bins approximate area-weighted image
/// integrals instead of over-weighting the center.
pub fn to_polar<T: Real>(
    img: &Grid<T>,
    n_r: usize,
    n_theta: usize,
    area_weighted: bool,
) -> PolarImage<T> {
    assert!(n_theta.is_power_of_two(), "n_theta must be a power of two");
    assert!(n_r >= 2, "need at least two radius bins");
    let channels = img.channels();
    let (cy, cx) = image_center(img);
    let r_max = (img.height().min(img.width()) as f64) / 2.0;
    let mut data = Vec::with_capacity(n_r * channels * n_theta);
    for i in 0..n_r {
        let r = (i + 1) as f64 / n_r as f64 * r_max;
        let scale = if area_weighted { T::of((r / r_max).sqrt()) } else { T::one() };
        // sample positions are channel-independent; precompute them
        let positions: Vec<(f64, f64)> = (0..n_theta)
            .map(|j| {
                let theta = core::f64::consts::TAU * j as f64 / n_theta as f64;
                (cy + r * Float::sin(theta), cx + r * Float::cos(theta))
            })
            .collect();
        for ch in 0..channels {
            for &(y, x) in &positions {
                data.push(scale * bilinear(img, y, x, ch));
            }
        }
    }
    PolarImage { n_r, n_theta, channels, data, center: (cy, cx), r_max }
}

/// Rotate image content by `angle` radians about the center (bilinear).
///
/// A feature at polar angle `phi` (measured in the `(x=col, y=row)` frame)
/// moves to `phi + angle`.
pub fn rotate_image<T: Real>(img: &Grid<T>, angle: f64) -> Grid<T> {
    if angle == 0.0 {
        return img.clone();
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let (cy, cx) = image_center(img);
    let (sin, cos) = (Float::sin(angle), Float::cos(angle));
    let mut out = Grid::zeros(h, w, c);
    for r in 0..h {
        for col in 0..w {
            // inverse rotation of the output position
            let dy = r as f64 - cy;
            let dx = col as f64 - cx;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            for ch in 0..c {
                out.set(r, col, ch, bilinear(img, sy, sx, ch));
            }
        }
    }
    out
}

/// Mirror columns (horizontal reflection about the vertical axis).
pub fn reflect_image<T: Real>(img: &Grid<T>) -> Grid<T> {
    img.transform(crate::grid::D4::FlipH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    /// Smooth asymmetric test pattern.
    fn blob(h: usize, w: usize, c: usize) -> Grid<f64> {
        let mut g = Grid::zeros(h, w, c);
        let (cy, cx) = image_center(&g);
        for r in 0..h {
            for col in 0..w {
                let dy = (r as f64 - cy) / h as f64;
                let dx = (col as f64 - cx) / w as f64;
                for ch in 0..c {
                    let v = (-18.0 * ((dx - 0.12).powi(2) + (dy + 0.07 * ch as f64).powi(2))).exp()
                        + 0.5 * (-30.0 * ((dx + 0.2).powi(2) + (dy - 0.15).powi(2))).exp();
                    g.set(r, col, ch, v);
                }
            }
        }
        g
    }

    /// Radially symmetric pattern f(r), gentle enough that bilinear
    /// interpolation tracks it to well under 1e-3.
    fn radial(h: usize, w: usize) -> Grid<f64> {
        let mut g = Grid::zeros(h, w, 1);
        let (cy, cx) = image_center(&g);
        for r in 0..h {
            for c in 0..w {
                let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                g.set(r, c, 0, (-0.001 * d * d).exp());
            }
        }
        g
    }

    #[test]
    fn radially_symmetric_rows_are_constant() {
        let img = radial(33, 33);
        let p = to_polar(&img, 8, 64, false);
        // skip the outermost row: at r = r_max its circle grazes the image
        // border, where samples start reading the zero padding
        for r in 0..7 {
            let row = p.row(r, 0);
            let mean: f64 = row.iter().sum::<f64>() / 64.0;
            for v in row {
                assert!((v - mean).abs() < 1e-3, "radius row {r} not constant");
            }
        }
    }

    #[test]
    fn zero_image_gives_zero_polar() {
        let img: Grid<f32> = Grid::zeros(16, 16, 2);
        let p = to_polar(&img, 4, 32, true);
        assert!(p.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rotation_by_one_bin_shifts_polar_by_one() {
        let img = blob(65, 65, 1);
        let n_theta = 64;
        let angle = core::f64::consts::TAU / n_theta as f64;
        let rotated = rotate_image(&img, angle);
        let p0 = to_polar(&img, 16, n_theta, false);
        let p1 = to_polar(&rotated, 16, n_theta, false);
        let mut max_diff = 0.0f64;
        for r in 0..16 {
            for j in 0..n_theta {
                let shifted = p0.get(r, (j + n_theta - 1) % n_theta, 0);
                max_diff = max_diff.max((p1.get(r, j, 0) - shifted).abs());
            }
        }
        assert!(max_diff < 0.05, "max diff {max_diff}");
    }

    #[test]
    fn rotate_zero_angle_is_identity() {
        let img = blob(21, 21, 2);
        assert_eq!(rotate_image(&img, 0.0), img);
    }

    #[test]
    fn rotate_half_turn_twice_returns_close() {
        let img = blob(31, 31, 1);
        let double = rotate_image(&rotate_image(&img, core::f64::consts::PI), core::f64::consts::PI);
        // interior only: boundary pixels interpolate against zero padding
        for r in 4..27 {
            for c in 4..27 {
                assert!((double.get(r, c, 0) - img.get(r, c, 0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reflect_is_an_involution() {
        let mut rng = Stream::new(8);
        let mut img: Grid<f32> = Grid::zeros(9, 12, 3);
        for v in img.data_mut() {
            *v = rng.next_f64() as f32;
        }
        assert_eq!(reflect_image(&reflect_image(&img)), img);
    }

    #[test]
    fn bilinear_at_integer_coords_is_exact() {
        let img = blob(9, 9, 1);
        for r in 0..9 {
            for c in 0..9 {
                assert_eq!(bilinear(&img, r as f64, c as f64, 0), img.get(r, c, 0));
            }
        }
    }

    #[test]
    fn area_weighting_scales_rows_by_sqrt_radius() {
        let mut img: Grid<f64> = Grid::zeros(17, 17, 1);
        img.data_mut().fill(1.0);
        let plain = to_polar(&img, 8, 32, false);
        let weighted = to_polar(&img, 8, 32, true);
        for i in 0..8 {
            let r = (i + 1) as f64 / 8.0;
            let expect = r.sqrt();
            // compare at an angle bin whose samples stay inside the image
            let (a, b) = (plain.get(i, 0, 0), weighted.get(i, 0, 0));
            if a > 0.99 {
                assert!((b / a - expect).abs() < 1e-9);
            }
        }
    }
}
