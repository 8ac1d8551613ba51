//! Deterministic random number generation.
//!
//! Two flavors:
//!
//! - [`Stream`]: a sequential splitmix64 generator for sampling work
//!   (parameter init, Poisson-disk darts, pool sampling).
//! - [`StepRng`]: a counter-based source for per-cell Bernoulli update masks.
//!   The mask bit for a cell is a pure function of `(seed, step, row, col)`,
//!   so masks are identical no matter the cell visit order or thread
//!   schedule, and a rollout can be replayed from its seed alone.

use crate::grid::D4;

/// splitmix64 finalizer: a high-quality 64-bit mixing function.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

#[inline]
fn to_unit_f64(bits: u64) -> f64 {
    // 53 high bits -> [0, 1)
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential deterministic generator (splitmix64).
#[derive(Clone, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent substream identified by `tag`.
    pub fn fork(&self, tag: u64) -> Self {
        Self { state: mix64(self.state ^ mix64(tag)) }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut x = self.state;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
        x ^ (x >> 31)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        to_unit_f64(self.next_u64())
    }

    /// Uniform integer in `[0, bound)`.
    #[inline]
    pub fn next_below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_f64() * bound as f64) as usize % bound
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    #[inline]
    pub fn next_range(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        lo + self.next_below(hi - lo + 1)
    }

    /// Standard normal via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        use num_traits::Float;
        let u1 = to_unit_f64(self.next_u64().wrapping_add(1).max(1));
        let u2 = self.next_f64();
        let r = (-2.0 * Float::ln(u1.max(f64::MIN_POSITIVE))).sqrt();
        r * Float::cos(core::f64::consts::TAU * u2)
    }
}

/// Counter-based source for stochastic update masks.
///
/// `bernoulli(row, col, p)` depends only on `(seed, step, row, col)`, never on
/// the call order. `reindex` remaps cell coordinates through a grid symmetry
/// before hashing; the equivariance harness uses it to run a transformed
/// rollout with correspondingly transformed masks.
#[derive(Clone, Copy, Debug)]
pub struct StepRng {
    pub seed: u64,
    pub step: u64,
    reindex: Option<(D4, usize, usize)>,
}

impl StepRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, step: 0, reindex: None }
    }

    /// Same seed, step counter advanced by `delta`.
    pub fn offset(&self, delta: u64) -> Self {
        Self { step: self.step + delta, ..*self }
    }

    /// Remap cell coordinates through the inverse of `op` (given this grid's
    /// `height`/`width`) before hashing, so masks transform with the grid.
    pub fn with_reindex(self, op: D4, height: usize, width: usize) -> Self {
        Self { reindex: Some((op.inverse(), height, width)), ..self }
    }

    #[inline]
    fn cell_bits(&self, row: usize, col: usize) -> u64 {
        let (row, col) = match self.reindex {
            Some((inv, h, w)) => inv.map_coord(row, col, h, w),
            None => (row, col),
        };
        let h = mix64(self.seed) ^ mix64(self.step ^ 0xA5A5_A5A5_0000_0001);
        mix64(h ^ (((row as u64) << 32) | col as u64))
    }

    /// Bernoulli update decision for one cell.
    #[inline]
    pub fn bernoulli(&self, row: usize, col: usize, p: f64) -> bool {
        to_unit_f64(self.cell_bits(row, col)) < p
    }
}
