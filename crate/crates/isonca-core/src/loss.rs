//! The rotation/reflection-invariant pattern-matching loss.
//!
//! Pipeline: sharpen both patterns, resample to polar coordinates, compute
//! per-rotation squared-difference profiles for the target and its mirror via
//! FFT circular cross-correlation, pick the global best alignment, then score
//! the pattern against the correspondingly rotated Cartesian target. The
//! alignment choice is a forward-pass constant; only the final Cartesian
//! mean-squared error is differentiated.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::fft::{fft, fft_real, Cplx};
use crate::grid::Grid;
use crate::polar::{reflect_image, rotate_image, to_polar, PolarImage};
use crate::real::Real;
use crate::target::TargetSpec;

/// Gaussian blur with sigma = `radius` (clamp-to-edge sampling), applied
/// separably. `radius = 0` is the identity.
pub fn gaussian_blur<T: Real>(img: &Grid<T>, radius: f64) -> Grid<T> {
    if radius <= 0.0 {
        return img.clone();
    }
    let half = Float::ceil(3.0 * radius) as i64;
    let mut kernel = Vec::with_capacity(2 * half as usize + 1);
    let mut sum = 0.0;
    for d in -half..=half {
        let w = Float::exp(-(d as f64 * d as f64) / (2.0 * radius * radius));
        kernel.push(w);
        sum += w;
    }
    let kernel: Vec<T> = kernel.into_iter().map(|w| T::of(w / sum)).collect();

    let (h, w, c) = (img.height(), img.width(), img.channels());
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    // horizontal pass
    let mut mid = Grid::zeros(h, w, c);
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut acc = T::zero();
                for (i, k) in kernel.iter().enumerate() {
                    let cc = clamp(col as i64 + i as i64 - half, w);
                    acc += *k * img.get(r, cc, ch);
                }
                mid.set(r, col, ch, acc);
            }
        }
    }
    // vertical pass
    let mut out = Grid::zeros(h, w, c);
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut acc = T::zero();
                for (i, k) in kernel.iter().enumerate() {
                    let rr = clamp(r as i64 + i as i64 - half, h);
                    acc += *k * mid.get(rr, col, ch);
                }
                out.set(r, col, ch, acc);
            }
        }
    }
    out
}

/// Unsharp mask: `img + k * (img - blur(img, radius))`.
pub fn sharpen<T: Real>(img: &Grid<T>, k: f64, radius: f64) -> Grid<T> {
    if k == 0.0 {
        return img.clone();
    }
    let blurred = gaussian_blur(img, radius);
    let kk = T::of(k);
    let mut out = img.clone();
    for (o, b) in out.data_mut().iter_mut().zip(blurred.data()) {
        *o += kk * (*o - *b);
    }
    out
}

/// Sharpen only the first 4 (RGBA) channels; auxiliary channels pass through.
fn sharpen_rgba_only<T: Real>(img: &Grid<T>, k: f64, radius: f64) -> Grid<T> {
    if img.channels() <= 4 {
        return sharpen(img, k, radius);
    }
    let rgba = sharpen(&img.slice_channels(0, 4), k, radius);
    rgba.concat_channels(&img.slice_channels(4, img.channels()))
}

/// Squared-difference loss for every circular shift along theta, channels
/// weighted by `weights` (empty = all ones):
/// `L[t] = sum_c w_c * (sum S_c^2 + sum T_c^2 - 2 * corr_c(t))`,
/// with the correlation term computed by FFT along each `(radius, channel)`
/// row and accumulated in the frequency domain.
pub fn rotation_loss_profile_weighted<T: Real>(
    s: &PolarImage<T>,
    t: &PolarImage<T>,
    weights: &[T],
) -> Vec<T> {
    assert_eq!(s.n_r(), t.n_r(), "polar radius bins differ");
    assert_eq!(s.n_theta(), t.n_theta(), "polar angle bins differ");
    assert_eq!(s.channels(), t.channels(), "polar channels differ");
    let n = s.n_theta();
    let mut acc = vec![Cplx::<T>::zero(); n];
    let mut const_term = T::zero();
    for r in 0..s.n_r() {
        for ch in 0..s.channels() {
            let w = weights.get(ch).copied().unwrap_or_else(T::one);
            let (srow, trow) = (s.row(r, ch), t.row(r, ch));
            const_term += w
                * (srow.iter().map(|v| *v * *v).sum::<T>()
                    + trow.iter().map(|v| *v * *v).sum::<T>());
            let sf = fft_real(srow);
            let tf = fft_real(trow);
            for (a, (sv, tv)) in acc.iter_mut().zip(sf.iter().zip(&tf)) {
                *a = a.add(sv.mul(tv.conj()).mul(Cplx::new(w, T::zero())));
            }
        }
    }
    fft(&mut acc, true);
    acc.into_iter()
        .map(|corr| const_term - T::of(2.0) * corr.re)
        .collect()
}

/// Unweighted per-rotation loss profile.
pub fn rotation_loss_profile<T: Real>(s: &PolarImage<T>, t: &PolarImage<T>) -> Vec<T> {
    rotation_loss_profile_weighted(s, t, &[])
}

/// Polar/alignment configuration for the invariant loss.
#[derive(Clone, Debug)]
pub struct PolarConfig {
    /// Angle bins; must be a power of two.
    pub n_theta: usize,
    /// Radius bins.
    pub n_r: usize,
    /// Unsharp-mask amount applied to RGBA before matching.
    pub sharpen_k: f64,
    /// Unsharp-mask blur radius in pixels.
    pub sharpen_radius: f64,
    /// Scale radius rows by sqrt(r/r_max); off reproduces the plain
    /// equal-weight polar sum.
    pub area_weighted: bool,
}

impl PolarConfig {
    /// Defaults sized for a target of the given (padded) dimension.
    pub fn for_size(size: usize) -> Self {
        Self {
            n_theta: 256,
            n_r: (size / 2).max(2),
            sharpen_k: 0.5,
            sharpen_radius: 1.0,
            area_weighted: true,
        }
    }
}

/// Per-rotation losses for the target and its mirror image, plus the argmin.
#[derive(Clone, Debug)]
pub struct LossProfile<T> {
    /// Loss per theta bin against the target.
    pub original: Vec<T>,
    /// Loss per theta bin against the horizontally reflected target.
    pub reflected: Vec<T>,
    /// Theta bin of the global minimum.
    pub argmin_bin: usize,
    /// Whether the global minimum sits on the reflected branch.
    pub argmin_reflected: bool,
    /// The global minimum value.
    pub min_value: T,
}

impl<T: Real> LossProfile<T> {
    fn from_branches(original: Vec<T>, reflected: Vec<T>) -> Self {
        let mut argmin_bin = 0;
        let mut argmin_reflected = false;
        let mut min_value = T::infinity();
        for (branch, flag) in [(&original, false), (&reflected, true)] {
            for (i, v) in branch.iter().enumerate() {
                if *v < min_value {
                    min_value = *v;
                    argmin_bin = i;
                    argmin_reflected = flag;
                }
            }
        }
        Self { original, reflected, argmin_bin, argmin_reflected, min_value }
    }

    /// Rotation angle (radians) corresponding to the argmin bin.
    pub fn argmin_angle(&self) -> f64 {
        core::f64::consts::TAU * self.argmin_bin as f64 / self.original.len() as f64
    }
}

/// Result of the invariant loss: differentiable scalar, the aligned Cartesian
/// target it was measured against, and the full alignment profile.
#[derive(Clone, Debug)]
pub struct InvariantLoss<T> {
    pub loss: T,
    /// The (possibly reflected) target rotated to the best alignment,
    /// `height x width x (4 + n_aux)`.
    pub aligned: Grid<T>,
    pub profile: LossProfile<T>,
}

/// Channel shortfall: the state grid must carry RGBA plus all aux channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelShortfall {
    pub needed: usize,
    pub got: usize,
}

impl core::fmt::Display for ChannelShortfall {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "state grid has {} channels; loss needs {}", self.got, self.needed)
    }
}

impl core::error::Error for ChannelShortfall {}

/// Build both branch profiles between a state grid's compared channels and a
/// target, at the given polar configuration.
pub fn alignment_profile<T: Real>(
    state: &Grid<T>,
    target: &TargetSpec<T>,
    cfg: &PolarConfig,
) -> Result<LossProfile<T>, ChannelShortfall> {
    let compared = target.compared_channels();
    if state.channels() < compared {
        return Err(ChannelShortfall { needed: compared, got: state.channels() });
    }
    let s_img = state.slice_channels(0, compared);
    let t_img = target.compared();

    let s_sharp = sharpen_rgba_only(&s_img, cfg.sharpen_k, cfg.sharpen_radius);
    let t_sharp = sharpen_rgba_only(&t_img, cfg.sharpen_k, cfg.sharpen_radius);
    let t_refl_sharp = reflect_image(&t_sharp);

    let sp = to_polar(&s_sharp, cfg.n_r, cfg.n_theta, cfg.area_weighted);
    let tp = to_polar(&t_sharp, cfg.n_r, cfg.n_theta, cfg.area_weighted);
    let tpr = to_polar(&t_refl_sharp, cfg.n_r, cfg.n_theta, cfg.area_weighted);

    let original = rotation_loss_profile_weighted(&sp, &tp, &target.channel_weights);
    let reflected = rotation_loss_profile_weighted(&sp, &tpr, &target.channel_weights);
    Ok(LossProfile::from_branches(original, reflected))
}

/// Weighted mean squared error between two equal-shape grids.
pub fn weighted_mse<T: Real>(a: &Grid<T>, b: &Grid<T>, weights: &[T]) -> T {
    assert_eq!(a.data().len(), b.data().len());
    let c = a.channels();
    let mut acc = T::zero();
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        let w = weights.get(i % c).copied().unwrap_or_else(T::one);
        let d = *x - *y;
        acc += w * d * d;
    }
    acc / T::of(a.data().len() as f64)
}

/// The rotation/reflection-invariant loss.
///
/// Selects the best (rotation, reflection) alignment from the polar profiles,
/// materializes the aligned Cartesian target, and scores the state against it
/// with a weighted mean squared error. The scalar is the training quantity;
/// the alignment is excluded from differentiation.
pub fn invariant_loss<T: Real>(
    state: &Grid<T>,
    target: &TargetSpec<T>,
    cfg: &PolarConfig,
) -> Result<InvariantLoss<T>, ChannelShortfall> {
    let profile = alignment_profile(state, target, cfg)?;
    let aligned = aligned_target(target, &profile, cfg);
    let compared = target.compared_channels();
    let s_img = state.slice_channels(0, compared);
    let loss = weighted_mse(&s_img, &aligned, &target.channel_weights);
    Ok(InvariantLoss { loss, aligned, profile })
}

/// Materialize the aligned target for a chosen profile argmin: reflect if the
/// minimum sits on the mirrored branch, then rotate to the argmin angle.
pub fn aligned_target<T: Real>(
    target: &TargetSpec<T>,
    profile: &LossProfile<T>,
    _cfg: &PolarConfig,
) -> Grid<T> {
    let base = if profile.argmin_reflected {
        reflect_image(&target.compared())
    } else {
        target.compared()
    };
    if profile.argmin_bin == 0 {
        base
    } else {
        rotate_image(&base, profile.argmin_angle())
    }
}
