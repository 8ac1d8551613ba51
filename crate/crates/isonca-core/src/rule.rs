//! The learned local update rule and grid stepping.
//!
//! Per cell: `s' = s + relu(p W0 + b0) W1`, gated by a Bernoulli update mask
//! and followed by alive masking. The per-cell network is evaluated as one
//! matrix product over the pre-alive cells, which is where essentially all of
//! the simulation and training time goes.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{alive_mask, apply_alive_masking, Grid, ALIVE_THRESHOLD};
use crate::perception::{perceive, FixedPointOverflow, Numerics};
use crate::real::Real;
use crate::rng::{StepRng, Stream};

/// Parameters of the two-layer update network.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleParams<T> {
    channels: usize,
    hidden: usize,
    /// Per-cell update probability for stochastic stepping.
    pub p_upd: f64,
    /// `(2C, hidden)`, row-major.
    pub w0: Vec<T>,
    /// `(hidden,)`.
    pub b0: Vec<T>,
    /// `(hidden, C)`, row-major.
    pub w1: Vec<T>,
}

/// Shape mismatch between a grid/perception field and the rule parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeMismatch {
    pub expected: usize,
    pub got: usize,
    pub what: &'static str,
}

impl core::fmt::Display for ShapeMismatch {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} mismatch: expected {}, got {}", self.what, self.expected, self.got)
    }
}

impl core::error::Error for ShapeMismatch {}

/// Errors from stepping a grid.
#[derive(Clone, Debug, PartialEq)]
pub enum StepError {
    Shape(ShapeMismatch),
    Overflow(FixedPointOverflow),
}

impl core::fmt::Display for StepError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StepError::Shape(e) => write!(f, "{e}"),
            StepError::Overflow(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for StepError {}

impl From<ShapeMismatch> for StepError {
    fn from(e: ShapeMismatch) -> Self {
        StepError::Shape(e)
    }
}

impl From<FixedPointOverflow> for StepError {
    fn from(e: FixedPointOverflow) -> Self {
        StepError::Overflow(e)
    }
}

impl<T: Real> RuleParams<T> {
    pub fn new(channels: usize, hidden: usize, p_upd: f64, w0: Vec<T>, b0: Vec<T>, w1: Vec<T>) -> Self {
        assert_eq!(w0.len(), 2 * channels * hidden, "w0 shape");
        assert_eq!(b0.len(), hidden, "b0 shape");
        assert_eq!(w1.len(), hidden * channels, "w1 shape");
        Self { channels, hidden, p_upd, w0, b0, w1 }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        param_count(self.channels, self.hidden)
    }

    pub fn is_finite(&self) -> bool {
        self.w0.iter().chain(&self.b0).chain(&self.w1).all(|v| v.is_finite())
    }
}

/// `2C*h + h + h*C` learned parameters.
pub fn param_count(channels: usize, hidden: usize) -> usize {
    2 * channels * hidden + hidden + hidden * channels
}

/// Fresh parameters: variance-scaled random `w0`, zero `b0`, zero `w1`.
/// With `w1 = 0` the initial rule is the identity map on states.
///
/// The variance scaling is per input feature: rows that read the stencil
/// response are shrunk by the stencil's self-weight (12), since those
/// features are about an order of magnitude larger than raw states. This
/// keeps initial pre-activations at unit scale, which the optimizer needs to
/// take its first steps without blowing up the rollout dynamics.
pub fn init_params<T: Real>(channels: usize, hidden: usize, rng: &mut Stream) -> RuleParams<T> {
    let fan_in = 2 * channels;
    let std = num_traits::Float::sqrt(2.0 / fan_in as f64);
    let mut w0 = Vec::with_capacity(fan_in * hidden);
    for feature in 0..fan_in {
        let scale = if feature < channels { std } else { std / 12.0 };
        for _ in 0..hidden {
            w0.push(T::of(rng.next_normal() * scale));
        }
    }
    RuleParams::new(
        channels,
        hidden,
        0.5,
        w0,
        vec![T::zero(); hidden],
        vec![T::zero(); hidden * channels],
    )
}

/// Evaluate the network on `rows` packed perception vectors (`rows x 2C`).
/// Returns the packed state increments (`rows x C`) and, when `keep_preact`,
/// the pre-activation matrix (`rows x hidden`) for backpropagation.
pub(crate) fn forward_rows<T: Real>(
    packed: &[T],
    rows: usize,
    params: &RuleParams<T>,
    keep_preact: bool,
) -> (Vec<T>, Option<Vec<T>>) {
    let (c, h) = (params.channels, params.hidden);
    debug_assert_eq!(packed.len(), rows * 2 * c);
    // preact = packed . w0 + b0
    let mut preact = vec![T::zero(); rows * h];
    for row in preact.chunks_exact_mut(h) {
        row.copy_from_slice(&params.b0);
    }
    T::gemm(rows, 2 * c, h, T::one(), packed, &params.w0, T::one(), &mut preact);
    let saved = keep_preact.then(|| preact.clone());
    // in place relu
    for v in &mut preact {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    // delta = relu(preact) . w1
    let mut delta = vec![T::zero(); rows * c];
    T::gemm(rows, h, c, T::one(), &preact, &params.w1, T::zero(), &mut delta);
    (delta, saved)
}

/// Per-cell state increment `relu(p W0 + b0) W1` over the whole field.
pub fn rule_forward<T: Real>(
    perception: &Grid<T>,
    params: &RuleParams<T>,
) -> Result<Grid<T>, ShapeMismatch> {
    if perception.channels() != 2 * params.channels {
        return Err(ShapeMismatch {
            expected: 2 * params.channels,
            got: perception.channels(),
            what: "perception channels",
        });
    }
    let rows = perception.height() * perception.width();
    let (delta, _) = forward_rows(perception.data(), rows, params, false);
    Ok(Grid::from_vec(perception.height(), perception.width(), params.channels, delta))
}

/// Synchronous (every cell) or stochastic (Bernoulli-gated) stepping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMode {
    Stochastic,
    Synchronous,
}

/// Everything recorded about one step, enough to reverse it during
/// backpropagation and to reproduce it exactly.
pub(crate) struct StepRecord<T> {
    /// Cell indices (row-major) that were pre-alive; only these ran the net.
    pub alive_cells: Vec<usize>,
    /// Packed perception rows for the pre-alive cells (`n x 2C`).
    pub perception_rows: Vec<T>,
    /// Packed pre-activation rows (`n x hidden`).
    pub preact_rows: Vec<T>,
    /// Bernoulli gate per pre-alive cell.
    pub updated: Vec<bool>,
    /// Final combined (pre AND post) mask per cell of the whole grid.
    pub kept: Vec<bool>,
}

/// One CA step with full bookkeeping. The plain step is this with the record
/// thrown away; training keeps it.
pub(crate) fn step_with_record<T: Real>(
    grid: &Grid<T>,
    params: &RuleParams<T>,
    rng: StepRng,
    mode: StepMode,
    numerics: Numerics,
    keep: bool,
) -> Result<(Grid<T>, Option<StepRecord<T>>), StepError> {
    if grid.channels() != params.channels {
        return Err(ShapeMismatch {
            expected: params.channels,
            got: grid.channels(),
            what: "grid channels",
        }
        .into());
    }
    let (h, w, c) = (grid.height(), grid.width(), grid.channels());
    let pre = alive_mask(grid, ALIVE_THRESHOLD);
    let perception = perceive(grid, numerics)?;

    // Gather pre-alive cells into packed rows.
    let alive_cells: Vec<usize> =
        (0..h * w).filter(|cell| pre.flags()[*cell]).collect();
    let n = alive_cells.len();
    let mut packed = vec![T::zero(); n * 2 * c];
    for (i, &cell) in alive_cells.iter().enumerate() {
        packed[i * 2 * c..(i + 1) * 2 * c]
            .copy_from_slice(&perception.data()[cell * 2 * c..(cell + 1) * 2 * c]);
    }
    let (delta, preact) = forward_rows(&packed, n, params, keep);

    // Apply gated increments.
    let mut next = grid.clone();
    let mut updated = vec![false; n];
    for (i, &cell) in alive_cells.iter().enumerate() {
        let gate = match mode {
            StepMode::Synchronous => true,
            StepMode::Stochastic => rng.bernoulli(cell / w, cell % w, params.p_upd),
        };
        updated[i] = gate;
        if gate {
            let dst = &mut next.data_mut()[cell * c..(cell + 1) * c];
            for (d, v) in dst.iter_mut().zip(&delta[i * c..(i + 1) * c]) {
                *d += *v;
            }
        }
    }

    let post = alive_mask(&next, ALIVE_THRESHOLD);
    let masked = apply_alive_masking(&pre, &post, &next).expect("same dims");
    let record = keep.then(|| StepRecord {
        alive_cells,
        perception_rows: packed,
        preact_rows: preact.unwrap_or_default(),
        updated,
        kept: pre
            .flags()
            .iter()
            .zip(post.flags())
            .map(|(a, b)| *a && *b)
            .collect(),
    });
    Ok((masked, record))
}

/// One CA step: perceive, compute gated increments, apply alive masking.
pub fn nca_step<T: Real>(
    grid: &Grid<T>,
    params: &RuleParams<T>,
    rng: StepRng,
    mode: StepMode,
    numerics: Numerics,
) -> Result<Grid<T>, StepError> {
    step_with_record(grid, params, rng, mode, numerics, false).map(|(g, _)| g)
}

/// A finished rollout: the final state plus any recorded frames.
#[derive(Clone, Debug)]
pub struct RolloutResult<T> {
    pub final_grid: Grid<T>,
    /// `(step index, state)` pairs; step 0 is the initial state.
    pub frames: Vec<(usize, Grid<T>)>,
}

/// Apply `n_steps` sequential steps, recording every `record_every`-th frame
/// (0 disables recording). The rng counter advances with the step index.
pub fn rollout<T: Real>(
    grid: &Grid<T>,
    params: &RuleParams<T>,
    n_steps: usize,
    rng: StepRng,
    mode: StepMode,
    numerics: Numerics,
    record_every: usize,
) -> Result<RolloutResult<T>, StepError> {
    let mut frames = Vec::new();
    let mut state = grid.clone();
    if record_every > 0 {
        frames.push((0, state.clone()));
    }
    for t in 0..n_steps {
        state = nca_step(&state, params, rng.offset(t as u64), mode, numerics)?;
        if record_every > 0 && (t + 1) % record_every == 0 {
            frames.push((t + 1, state.clone()));
        }
    }
    Ok(RolloutResult { final_grid: state, frames })
}
