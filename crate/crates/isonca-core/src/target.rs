//! Training targets: premultiplied RGBA plus auxiliary channels.
//!
//! Auxiliary channels break symmetries that the rotation-invariant loss
//! cannot: a binary top/bottom split removes head-tail ambiguity, and aliased
//! concentric rings give cells a radial position signal. Aux channel `k` is
//! matched against cell state channel `4 + k`.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::grid::Grid;
use crate::polar::image_center;
use crate::real::Real;

/// Kinds of auxiliary target channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxKind {
    /// Top half `-0.5`, bottom half `+0.5`.
    Binary,
    /// Aliased concentric rings with the given mode.
    Radial(u32),
}

/// Half-plane split: rows above the horizontal midline are `-0.5`, rows from
/// the midline down are `+0.5`.
pub fn make_binary_aux<T: Real>(height: usize, width: usize) -> Grid<T> {
    let mut g = Grid::zeros(height, width, 1);
    let (lo, hi) = (T::of(-0.5), T::of(0.5));
    for r in 0..height {
        let v = if r < height / 2 { lo } else { hi };
        for c in 0..width {
            g.set(r, c, 0, v);
        }
    }
    g
}

/// Aliased concentric rings. With `r` the distance to the image center
/// normalized so `r = 1` at half the smaller image dimension:
/// even mode `sign(sin(r*n*pi)) * 0.5`, odd mode `sign(cos(r*n*pi)) * 0.5`,
/// with `sign(0) = 0`.
pub fn make_radial_aux<T: Real>(height: usize, width: usize, mode: u32) -> Grid<T> {
    assert!(mode >= 1, "radial mode must be >= 1");
    let mut g = Grid::zeros(height, width, 1);
    let (cy, cx) = image_center(&g);
    let half_min = height.min(width) as f64 / 2.0;
    for row in 0..height {
        for col in 0..width {
            let r = ((row as f64 - cy).powi(2) + (col as f64 - cx).powi(2)).sqrt() / half_min;
            let phase = r * mode as f64 * core::f64::consts::PI;
            let raw = if mode % 2 == 0 { Float::sin(phase) } else { Float::cos(phase) };
            let v = if raw > 0.0 {
                0.5
            } else if raw < 0.0 {
                -0.5
            } else {
                0.0
            };
            g.set(row, col, 0, T::of(v));
        }
    }
    g
}

/// Errors from target assembly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetError {
    /// RGBA input must have exactly 4 channels.
    NotRgba { got: usize },
    /// Values must already be premultiplied: each of R, G, B <= A.
    NotPremultiplied { row: usize, col: usize },
}

impl core::fmt::Display for TargetError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TargetError::NotRgba { got } => write!(f, "expected 4 channels, got {got}"),
            TargetError::NotPremultiplied { row, col } => {
                write!(f, "pixel ({row}, {col}) is not alpha-premultiplied")
            }
        }
    }
}

impl core::error::Error for TargetError {}

/// Multiply color channels by alpha, in place.
pub fn premultiply<T: Real>(rgba: &mut Grid<T>) {
    assert_eq!(rgba.channels(), 4);
    for cell in 0..rgba.height() * rgba.width() {
        let px = &mut rgba.data_mut()[cell * 4..(cell + 1) * 4];
        let a = px[3];
        px[0] = px[0] * a;
        px[1] = px[1] * a;
        px[2] = px[2] * a;
    }
}

/// A prepared training target: premultiplied RGBA in `[0, 1]`, auxiliary
/// channels in `{-0.5, 0, +0.5}`, and per-channel comparison weights.
#[derive(Clone, Debug)]
pub struct TargetSpec<T> {
    rgba: Grid<T>,
    aux: Grid<T>,
    aux_kinds: Vec<AuxKind>,
    /// One weight per compared channel (4 + n_aux); defaults to 1.
    pub channel_weights: Vec<T>,
}

impl<T: Real> TargetSpec<T> {
    /// Build from a premultiplied RGBA image: zero-pad by `pad` cells on each
    /// side, then synthesize the auxiliary channels at the padded size.
    pub fn from_premultiplied_rgba(
        rgba: &Grid<T>,
        pad: usize,
        aux_kinds: &[AuxKind],
    ) -> Result<Self, TargetError> {
        if rgba.channels() != 4 {
            return Err(TargetError::NotRgba { got: rgba.channels() });
        }
        let eps = T::of(1e-6);
        for r in 0..rgba.height() {
            for c in 0..rgba.width() {
                let px = rgba.cell(r, c);
                if px[0] > px[3] + eps || px[1] > px[3] + eps || px[2] > px[3] + eps {
                    return Err(TargetError::NotPremultiplied { row: r, col: c });
                }
            }
        }
        let (h, w) = (rgba.height() + 2 * pad, rgba.width() + 2 * pad);
        let mut padded = Grid::zeros(h, w, 4);
        for r in 0..rgba.height() {
            for c in 0..rgba.width() {
                padded.cell_mut(r + pad, c + pad).copy_from_slice(rgba.cell(r, c));
            }
        }
        let mut aux = Grid::zeros(h, w, aux_kinds.len());
        for (k, kind) in aux_kinds.iter().enumerate() {
            let ch = match kind {
                AuxKind::Binary => make_binary_aux::<T>(h, w),
                AuxKind::Radial(mode) => make_radial_aux::<T>(h, w, *mode),
            };
            for cell in 0..h * w {
                aux.data_mut()[cell * aux_kinds.len() + k] = ch.data()[cell];
            }
        }
        Ok(Self {
            rgba: padded,
            aux,
            aux_kinds: aux_kinds.to_vec(),
            channel_weights: vec![T::one(); 4 + aux_kinds.len()],
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.rgba.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.rgba.width()
    }

    #[inline]
    pub fn rgba(&self) -> &Grid<T> {
        &self.rgba
    }

    #[inline]
    pub fn aux(&self) -> &Grid<T> {
        &self.aux
    }

    #[inline]
    pub fn aux_kinds(&self) -> &[AuxKind] {
        &self.aux_kinds
    }

    /// Number of compared channels: RGBA plus auxiliaries.
    #[inline]
    pub fn compared_channels(&self) -> usize {
        4 + self.aux_kinds.len()
    }

    /// The full comparison stack: RGBA channels then aux channels.
    pub fn compared(&self) -> Grid<T> {
        if self.aux_kinds.is_empty() {
            self.rgba.clone()
        } else {
            self.rgba.concat_channels(&self.aux)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_aux_height_four_splits_rows() {
        let g: Grid<f64> = make_binary_aux(4, 3);
        for c in 0..3 {
            assert_eq!(g.get(0, c, 0), -0.5);
            assert_eq!(g.get(1, c, 0), -0.5);
            assert_eq!(g.get(2, c, 0), 0.5);
            assert_eq!(g.get(3, c, 0), 0.5);
        }
    }

    #[test]
    fn binary_aux_sums_to_zero_for_even_heights() {
        for h in [2usize, 4, 8, 10] {
            let g: Grid<f64> = make_binary_aux(h, 5);
            let sum: f64 = g.data().iter().sum();
            assert_eq!(sum, 0.0, "height {h}");
        }
    }

    #[test]
    fn binary_aux_vertical_flip_negates() {
        let g: Grid<f32> = make_binary_aux(6, 4);
        let flipped = g.transform(crate::grid::D4::FlipV);
        for (a, b) in g.data().iter().zip(flipped.data()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn radial_aux_formula_at_center() {
        // odd mode at r=0: sign(cos 0) * 0.5 = +0.5
        let g: Grid<f64> = make_radial_aux(9, 9, 1);
        assert_eq!(g.get(4, 4, 0), 0.5);
        // even mode at r=0: sign(sin 0) * 0.5 = 0
        let g: Grid<f64> = make_radial_aux(9, 9, 2);
        assert_eq!(g.get(4, 4, 0), 0.0);
    }

    #[test]
    fn radial_aux_matches_formula_at_known_radius() {
        // mode 4 at normalized r = 0.6: sign(sin(2.4*pi)) * 0.5 = +0.5
        // 21x21: half_min = 10.5, so r = 0.6 at distance 6.3; use the pixel
        // (10, 10 + 6) -> r = 6/10.5 = 0.5714 -> sin(0.5714*4*pi) = sin(2.2857*pi) > 0
        let g: Grid<f64> = make_radial_aux(21, 21, 4);
        let dist = 6.0 / 10.5;
        let expect = if (dist * 4.0 * core::f64::consts::PI).sin() > 0.0 { 0.5 } else { -0.5 };
        assert_eq!(g.get(10, 16, 0), expect);
        // direct formula spot-check of the spec example value
        assert!((0.6f64 * 4.0 * core::f64::consts::PI).sin() > 0.0);
    }

    #[test]
    fn radial_aux_values_in_tristate() {
        let g: Grid<f32> = make_radial_aux(16, 24, 3);
        for v in g.data() {
            assert!(*v == 0.5 || *v == -0.5 || *v == 0.0);
        }
    }

    #[test]
    fn premultiply_scales_colors() {
        let mut g: Grid<f64> = Grid::zeros(1, 2, 4);
        g.cell_mut(0, 0).copy_from_slice(&[1.0, 0.5, 0.25, 0.5]);
        g.cell_mut(0, 1).copy_from_slice(&[1.0, 1.0, 1.0, 0.0]);
        premultiply(&mut g);
        assert_eq!(g.cell(0, 0), &[0.5, 0.25, 0.125, 0.5]);
        assert_eq!(g.cell(0, 1), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn target_pads_and_synthesizes_aux() {
        let mut rgba: Grid<f64> = Grid::zeros(4, 4, 4);
        for cell in 0..16 {
            rgba.data_mut()[cell * 4 + 3] = 1.0;
            rgba.data_mut()[cell * 4] = 0.7;
        }
        let t = TargetSpec::from_premultiplied_rgba(&rgba, 3, &[AuxKind::Binary, AuxKind::Radial(4)])
            .unwrap();
        assert_eq!((t.height(), t.width()), (10, 10));
        assert_eq!(t.compared_channels(), 6);
        assert_eq!(t.aux_kinds(), &[AuxKind::Binary, AuxKind::Radial(4)]);
        // padding ring is empty
        assert_eq!(t.rgba().get(0, 0, 3), 0.0);
        assert_eq!(t.rgba().get(5, 5, 3), 1.0);
        // compared stack interleaves correctly
        let stack = t.compared();
        assert_eq!(stack.channels(), 6);
        assert_eq!(stack.get(5, 5, 0), 0.7);
        assert_eq!(stack.get(0, 0, 4), -0.5);
    }

    #[test]
    fn target_rejects_unpremultiplied_input() {
        let mut rgba: Grid<f32> = Grid::zeros(2, 2, 4);
        rgba.cell_mut(0, 0).copy_from_slice(&[0.9, 0.0, 0.0, 0.5]);
        assert!(matches!(
            TargetSpec::from_premultiplied_rgba(&rgba, 0, &[]),
            Err(TargetError::NotPremultiplied { row: 0, col: 0 })
        ));
    }

    #[test]
    fn fully_transparent_target_is_all_zero() {
        let mut rgba: Grid<f64> = Grid::zeros(3, 3, 4);
        // straight alpha-0 pixels premultiply to zero
        for cell in 0..9 {
            rgba.data_mut()[cell * 4] = 1.0;
        }
        premultiply(&mut rgba);
        let t = TargetSpec::from_premultiplied_rgba(&rgba, 1, &[]).unwrap();
        assert!(t.rgba().data().iter().all(|v| *v == 0.0));
    }
}
