//! The cell lattice: state storage, seed construction, alive/empty masking,
//! and the square-symmetry transforms used throughout the tests.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

/// Channel index of alpha, the liveness channel.
pub const ALPHA_CHANNEL: usize = 3;

/// A cell is alive when the 3x3 max of alpha exceeds this.
pub const ALIVE_THRESHOLD: f64 = 0.1;

/// Dense `height x width x channels` buffer of cell states (or image pixels).
///
/// Layout is row-major with the channel axis innermost, so one cell's state
/// vector is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![T::zero(); height * width * channels] }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), height * width * channels, "buffer size mismatch");
        Self { height, width, channels, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize, ch: usize) -> usize {
        debug_assert!(row < self.height && col < self.width && ch < self.channels);
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[self.idx(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: T) {
        let i = self.idx(row, col, ch);
        self.data[i] = v;
    }

    /// One cell's state vector.
    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[T] {
        let base = (row * self.width + col) * self.channels;
        &self.data[base..base + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let base = (row * self.width + col) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    /// New grid holding channels `[from, to)` of `self`.
    pub fn slice_channels(&self, from: usize, to: usize) -> Grid<T> {
        assert!(from <= to && to <= self.channels);
        let mut out = Grid::zeros(self.height, self.width, to - from);
        for cell in 0..self.height * self.width {
            let src = &self.data[cell * self.channels + from..cell * self.channels + to];
            out.data[cell * (to - from)..(cell + 1) * (to - from)].copy_from_slice(src);
        }
        out
    }

    /// Stack the channels of `other` after the channels of `self`.
    pub fn concat_channels(&self, other: &Grid<T>) -> Grid<T> {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let c = self.channels + other.channels;
        let mut out = Grid::zeros(self.height, self.width, c);
        for cell in 0..self.height * self.width {
            out.data[cell * c..cell * c + self.channels]
                .copy_from_slice(&self.data[cell * self.channels..(cell + 1) * self.channels]);
            out.data[cell * c + self.channels..(cell + 1) * c]
                .copy_from_slice(&other.data[cell * other.channels..(cell + 1) * other.channels]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Apply a square symmetry to the whole grid (all channels alike).
    pub fn transform(&self, op: D4) -> Grid<T> {
        let (oh, ow) = op.map_dims(self.height, self.width);
        let mut out = Grid::zeros(oh, ow, self.channels);
        for r in 0..self.height {
            for c in 0..self.width {
                let (nr, nc) = op.map_coord(r, c, self.height, self.width);
                let dst = (nr * ow + nc) * self.channels;
                let src = (r * self.width + c) * self.channels;
                out.data[dst..dst + self.channels]
                    .copy_from_slice(&self.data[src..src + self.channels]);
            }
        }
        out
    }

    /// Largest absolute difference against `other`.
    pub fn max_abs_diff(&self, other: &Grid<T>) -> T {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

/// The eight symmetries of the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D4 {
    Identity,
    /// (r, c) -> (c, H-1-r)
    Rot90,
    Rot180,
    Rot270,
    /// Mirror columns.
    FlipH,
    /// Mirror rows.
    FlipV,
    Transpose,
    AntiTranspose,
}

impl D4 {
    pub const ALL: [D4; 8] = [
        D4::Identity,
        D4::Rot90,
        D4::Rot180,
        D4::Rot270,
        D4::FlipH,
        D4::FlipV,
        D4::Transpose,
        D4::AntiTranspose,
    ];

    /// Output dimensions for an input of `h x w`.
    #[inline]
    pub fn map_dims(self, h: usize, w: usize) -> (usize, usize) {
        match self {
            D4::Identity | D4::Rot180 | D4::FlipH | D4::FlipV => (h, w),
            D4::Rot90 | D4::Rot270 | D4::Transpose | D4::AntiTranspose => (w, h),
        }
    }

    /// Where input cell `(r, c)` lands, for an input of `h x w`.
    #[inline]
    pub fn map_coord(self, r: usize, c: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            D4::Identity => (r, c),
            D4::Rot90 => (c, h - 1 - r),
            D4::Rot180 => (h - 1 - r, w - 1 - c),
            D4::Rot270 => (w - 1 - c, r),
            D4::FlipH => (r, w - 1 - c),
            D4::FlipV => (h - 1 - r, c),
            D4::Transpose => (c, r),
            D4::AntiTranspose => (w - 1 - c, h - 1 - r),
        }
    }

    pub fn inverse(self) -> D4 {
        match self {
            D4::Rot90 => D4::Rot270,
            D4::Rot270 => D4::Rot90,
            other => other,
        }
    }
}

/// Errors from grid construction and masking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GridError {
    /// Grid too small for the requested seed.
    DimensionTooSmall { height: usize, width: usize },
    /// Placement circle radius below the 2-cell minimum.
    RadiusTooSmall,
    /// Fewer channels than an operation needs.
    NotEnoughChannels { needed: usize, got: usize },
    /// A seed point lands outside the grid.
    PointOutOfBounds { dx: i64, dy: i64 },
    /// Two seed points round to the same cell.
    PointCollision { dx: i64, dy: i64 },
    /// A seed point's alpha channel is not exactly 1.
    AlphaNotOne { dx: i64, dy: i64 },
    /// Structured seeds need at least 3 points.
    TooFewPoints { got: usize },
    /// All seed points lie on one line, so they cannot fix an orientation.
    CollinearPoints,
    /// Mask and grid dimensions differ.
    DimensionMismatch,
}

impl core::fmt::Display for GridError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GridError::DimensionTooSmall { height, width } => {
                write!(f, "grid {height}x{width} is too small")
            }
            GridError::RadiusTooSmall => write!(f, "seed circle radius must be >= 2 cells"),
            GridError::NotEnoughChannels { needed, got } => {
                write!(f, "need at least {needed} channels, got {got}")
            }
            GridError::PointOutOfBounds { dx, dy } => {
                write!(f, "seed point offset ({dx}, {dy}) lies outside the grid")
            }
            GridError::PointCollision { dx, dy } => {
                write!(f, "two seed points occupy the cell at offset ({dx}, {dy})")
            }
            GridError::AlphaNotOne { dx, dy } => {
                write!(f, "seed point at offset ({dx}, {dy}) must have alpha exactly 1")
            }
            GridError::TooFewPoints { got } => {
                write!(f, "structured seed needs >= 3 points, got {got}")
            }
            GridError::CollinearPoints => write!(f, "seed points are collinear"),
            GridError::DimensionMismatch => write!(f, "dimension mismatch"),
        }
    }
}

impl core::error::Error for GridError {}

/// One point of a structured seed: integer cell offsets from the grid center
/// plus the full channel encoding written into that cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedPoint<T> {
    /// Column offset from center (positive right).
    pub dx: i64,
    /// Row offset from center (positive down).
    pub dy: i64,
    /// Per-channel state; channel 3 (alpha) must be 1.
    pub encoding: Vec<T>,
}

/// A set of distinctly encoded seed points whose geometry fixes the grown
/// pattern's orientation and chirality.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredSeed<T> {
    pub points: Vec<SeedPoint<T>>,
    /// Placement circle radius in cells (for the uniform constructor).
    pub radius: f64,
}

impl<T: Real> StructuredSeed<T> {
    /// Points must be >= 3, non-collinear, each with alpha exactly 1.
    pub fn validate(&self) -> Result<(), GridError> {
        if self.points.len() < 3 {
            return Err(GridError::TooFewPoints { got: self.points.len() });
        }
        for p in &self.points {
            if p.encoding.len() <= ALPHA_CHANNEL {
                return Err(GridError::NotEnoughChannels {
                    needed: ALPHA_CHANNEL + 1,
                    got: p.encoding.len(),
                });
            }
            if p.encoding[ALPHA_CHANNEL] != T::one() {
                return Err(GridError::AlphaNotOne { dx: p.dx, dy: p.dy });
            }
        }
        // Collinear iff every cross product with the first edge vanishes.
        let (x0, y0) = (self.points[0].dx, self.points[0].dy);
        let (ex, ey) = (self.points[1].dx - x0, self.points[1].dy - y0);
        let non_collinear = self.points[2..]
            .iter()
            .any(|p| ex * (p.dy - y0) - ey * (p.dx - x0) != 0);
        if non_collinear {
            Ok(())
        } else {
            Err(GridError::CollinearPoints)
        }
    }

    /// Rotate/flip all point offsets about the grid center (exact, integer).
    pub fn transform(&self, op: D4) -> StructuredSeed<T> {
        // Offsets use (dx right, dy down); reuse the coordinate map on the
        // offset vector directly: rotating the lattice about its center maps
        // offset (dy, dx) the same way map_coord maps (r, c) about (0, 0).
        let points = self
            .points
            .iter()
            .map(|p| {
                let (dy, dx) = match op {
                    D4::Identity => (p.dy, p.dx),
                    D4::Rot90 => (p.dx, -p.dy),
                    D4::Rot180 => (-p.dy, -p.dx),
                    D4::Rot270 => (-p.dx, p.dy),
                    D4::FlipH => (p.dy, -p.dx),
                    D4::FlipV => (-p.dy, p.dx),
                    D4::Transpose => (p.dx, p.dy),
                    D4::AntiTranspose => (-p.dx, -p.dy),
                };
                SeedPoint { dx, dy, encoding: p.encoding.clone() }
            })
            .collect();
        StructuredSeed { points, radius: self.radius }
    }
}

/// All zeros except the center cell, where alpha is 1.
pub fn init_single_seed<T: Real>(
    height: usize,
    width: usize,
    channels: usize,
) -> Result<Grid<T>, GridError> {
    if height < 3 || width < 3 {
        return Err(GridError::DimensionTooSmall { height, width });
    }
    if channels <= ALPHA_CHANNEL {
        return Err(GridError::NotEnoughChannels { needed: ALPHA_CHANNEL + 1, got: channels });
    }
    let mut g = Grid::zeros(height, width, channels);
    g.set(height / 2, width / 2, ALPHA_CHANNEL, T::one());
    Ok(g)
}

/// Zeros everywhere except the seed points, each set to its encoding.
pub fn init_structured_seed<T: Real>(
    height: usize,
    width: usize,
    seed: &StructuredSeed<T>,
    channels: usize,
) -> Result<Grid<T>, GridError> {
    let (cr, cc) = (height as i64 / 2, width as i64 / 2);
    let mut g = Grid::zeros(height, width, channels);
    for p in &seed.points {
        if p.encoding.len() > channels {
            return Err(GridError::NotEnoughChannels { needed: p.encoding.len(), got: channels });
        }
        let (r, c) = (cr + p.dy, cc + p.dx);
        if r < 0 || c < 0 || r >= height as i64 || c >= width as i64 {
            return Err(GridError::PointOutOfBounds { dx: p.dx, dy: p.dy });
        }
        let (r, c) = (r as usize, c as usize);
        if g.cell(r, c).iter().any(|v| *v != T::zero()) {
            return Err(GridError::PointCollision { dx: p.dx, dy: p.dy });
        }
        g.cell_mut(r, c)[..p.encoding.len()].copy_from_slice(&p.encoding);
    }
    Ok(g)
}

/// Hexcone HSV -> RGB at full saturation and value; hue in degrees.
pub fn hsv_hue_to_rgb(hue_deg: f64) -> [f64; 3] {
    let wrapped = ((hue_deg % 360.0) + 360.0) % 360.0;
    let h = wrapped / 60.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    match h as u32 {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}

/// `n_points` on a circle of `radius` cells, colored by equally spaced hues.
///
/// Points sit at angles `2*pi*k/n + phase` (phase fixed at 90 degrees),
/// rounded to the nearest cell; encodings are RGB from hue `k*360/n` with
/// alpha 1 and hidden channels 0.
pub fn make_uniform_circle_seed<T: Real>(
    n_points: usize,
    radius: f64,
    channels: usize,
) -> Result<StructuredSeed<T>, GridError> {
    if n_points < 3 {
        return Err(GridError::TooFewPoints { got: n_points });
    }
    if radius < 2.0 {
        return Err(GridError::RadiusTooSmall);
    }
    let phase = core::f64::consts::FRAC_PI_2;
    let mut points = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let angle = core::f64::consts::TAU * k as f64 / n_points as f64 + phase;
        use num_traits::Float;
        let dx = Float::round(radius * Float::cos(angle)) as i64;
        let dy = Float::round(radius * Float::sin(angle)) as i64;
        if points.iter().any(|p: &SeedPoint<T>| p.dx == dx && p.dy == dy) {
            return Err(GridError::PointCollision { dx, dy });
        }
        let rgb = hsv_hue_to_rgb(360.0 * k as f64 / n_points as f64);
        let mut encoding = vec![T::zero(); channels];
        encoding[0] = T::of(rgb[0]);
        encoding[1] = T::of(rgb[1]);
        encoding[2] = T::of(rgb[2]);
        encoding[ALPHA_CHANNEL] = T::one();
        points.push(SeedPoint { dx, dy, encoding });
    }
    let seed = StructuredSeed { points, radius };
    seed.validate()?;
    Ok(seed)
}

/// Per-cell liveness flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AliveMask {
    height: usize,
    width: usize,
    flags: Vec<bool>,
}

impl AliveMask {
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.flags[row * self.width + col]
    }

    #[inline]
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn transform(&self, op: D4) -> AliveMask {
        let (oh, ow) = op.map_dims(self.height, self.width);
        let mut flags = vec![false; oh * ow];
        for r in 0..self.height {
            for c in 0..self.width {
                let (nr, nc) = op.map_coord(r, c, self.height, self.width);
                flags[nr * ow + nc] = self.flags[r * self.width + c];
            }
        }
        AliveMask { height: oh, width: ow, flags }
    }
}

/// Flag each cell whose 3x3 neighborhood max of alpha exceeds `threshold`.
/// Out-of-bounds neighbors count as alpha 0.
pub fn alive_mask<T: Real>(grid: &Grid<T>, threshold: f64) -> AliveMask {
    let (h, w) = (grid.height(), grid.width());
    let thr = T::of(threshold);
    let mut flags = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut m = T::zero();
            for dr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for dc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    m = m.max(grid.get(dr, dc, ALPHA_CHANNEL));
                }
            }
            flags[r * w + c] = m > thr;
        }
    }
    AliveMask { height: h, width: w, flags }
}

/// Zero every cell where NOT (pre AND post); leave the rest untouched.
pub fn apply_alive_masking<T: Real>(
    pre: &AliveMask,
    post: &AliveMask,
    grid: &Grid<T>,
) -> Result<Grid<T>, GridError> {
    if pre.height != grid.height()
        || pre.width != grid.width()
        || post.height != grid.height()
        || post.width != grid.width()
    {
        return Err(GridError::DimensionMismatch);
    }
    let mut out = grid.clone();
    let c = grid.channels();
    for (cell, (p, q)) in pre.flags.iter().zip(&post.flags).enumerate() {
        if !(*p && *q) {
            out.data_mut()[cell * c..(cell + 1) * c].fill(T::zero());
        }
    }
    Ok(out)
}
