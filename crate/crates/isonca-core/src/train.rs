//! Backpropagation-through-time training with a persistence pool.
//!
//! Each training step samples previously grown states from a pool, reseeds
//! the worst one, rolls every sample forward a random number of CA steps,
//! differentiates the loss back through the rollout, and applies an Adam
//! update. Putting final states back in the pool makes the rule learn to
//! persist patterns, not just grow them once.
//!
//! Gradients are exact reverse-mode derivatives of the forward computation
//! with the stochastic update masks, the alive masks, and the loss alignment
//! all treated as constants of the forward pass.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::Grid;
use crate::loss::{invariant_loss, weighted_mse, ChannelShortfall, PolarConfig};
use crate::perception::{laplacian_conv, Numerics};
use crate::real::Real;
use crate::rng::{mix64, StepRng, Stream};
use crate::rule::{step_with_record, RuleParams, StepError, StepMode, StepRecord};
use crate::target::TargetSpec;

/// Which training strategy drives the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Fixed-orientation loss; orientation comes from a structured seed.
    StructuredSeed,
    /// Rotation/reflection-invariant loss from a single seed cell.
    SingleSeed,
}

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub batch: usize,
    pub pool: usize,
    /// Rollout length sampled uniformly from `[steps_min, steps_max]`.
    pub steps_min: usize,
    pub steps_max: usize,
    pub learning_rate: f64,
    /// Fraction of `total_steps` after which the learning rate is halved.
    pub lr_half_at: f64,
    pub total_steps: usize,
    /// Divide each layer's gradient by its L2 norm (+1e-8) before Adam.
    pub grad_norm: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::StructuredSeed,
            batch: 8,
            pool: 256,
            steps_min: 48,
            steps_max: 96,
            learning_rate: 1e-3,
            lr_half_at: 0.7,
            total_steps: 8000,
            grad_norm: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.steps_min < 1 || self.steps_max < self.steps_min {
            return Err(TrainError::BadConfig("steps range must satisfy 1 <= min <= max"));
        }
        if self.pool < self.batch || self.batch == 0 {
            return Err(TrainError::BadConfig("need pool >= batch >= 1"));
        }
        Ok(())
    }
}

/// Errors surfaced by training.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    BadConfig(&'static str),
    Step(StepError),
    Channels(ChannelShortfall),
    /// Loss or gradient went non-finite; carries the training step index.
    NonFinite { step: usize },
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::BadConfig(msg) => write!(f, "bad config: {msg}"),
            TrainError::Step(e) => write!(f, "{e}"),
            TrainError::Channels(e) => write!(f, "{e}"),
            TrainError::NonFinite { step } => {
                write!(f, "non-finite loss or gradient at training step {step}")
            }
        }
    }
}

impl core::error::Error for TrainError {}

impl From<StepError> for TrainError {
    fn from(e: StepError) -> Self {
        TrainError::Step(e)
    }
}

impl From<ChannelShortfall> for TrainError {
    fn from(e: ChannelShortfall) -> Self {
        TrainError::Channels(e)
    }
}

/// Gradients shaped like [`RuleParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub w0: Vec<T>,
    pub b0: Vec<T>,
    pub w1: Vec<T>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &RuleParams<T>) -> Self {
        Self {
            w0: vec![T::zero(); params.w0.len()],
            b0: vec![T::zero(); params.b0.len()],
            w1: vec![T::zero(); params.w1.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        for (a, b) in self.w0.iter_mut().zip(&other.w0) {
            *a += scale * *b;
        }
        for (a, b) in self.b0.iter_mut().zip(&other.b0) {
            *a += scale * *b;
        }
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += scale * *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w0.iter().chain(&self.b0).chain(&self.w1).all(|v| v.is_finite())
    }

    /// Divide each layer by its own L2 norm plus 1e-8.
    pub fn normalize_per_layer(&mut self) {
        for layer in [&mut self.w0, &mut self.b0, &mut self.w1] {
            let norm = layer.iter().map(|v| *v * *v).sum::<T>().sqrt() + T::of(1e-8);
            for v in layer.iter_mut() {
                *v /= norm;
            }
        }
    }
}

/// The training objective: what the final state of a rollout is scored on.
#[derive(Clone, Debug)]
pub enum Objective<'a, T> {
    /// Mean squared error against the target at fixed orientation.
    Fixed(&'a TargetSpec<T>),
    /// Rotation/reflection-invariant loss.
    Invariant(&'a TargetSpec<T>, &'a PolarConfig),
}

impl<T: Real> Objective<'_, T> {
    /// Scalar loss, its gradient with respect to the full state grid, and
    /// the selected rotation bin (invariant objective only).
    pub fn evaluate(
        &self,
        state: &Grid<T>,
    ) -> Result<(T, Grid<T>, Option<usize>), ChannelShortfall> {
        let (target, reference, theta) = match self {
            Objective::Fixed(t) => {
                let compared = t.compared_channels();
                if state.channels() < compared {
                    return Err(ChannelShortfall { needed: compared, got: state.channels() });
                }
                (*t, t.compared(), None)
            }
            Objective::Invariant(t, cfg) => {
                let out = invariant_loss(state, t, cfg)?;
                (*t, out.aligned, Some(out.profile.argmin_bin))
            }
        };
        let compared = target.compared_channels();
        let count = T::of((state.height() * state.width() * compared) as f64);
        let mut grad = Grid::zeros(state.height(), state.width(), state.channels());
        let mut loss = T::zero();
        let two = T::of(2.0);
        for cell in 0..state.height() * state.width() {
            for ch in 0..compared {
                let w = target.channel_weights.get(ch).copied().unwrap_or_else(T::one);
                let d = state.data()[cell * state.channels() + ch]
                    - reference.data()[cell * compared + ch];
                loss += w * d * d;
                grad.data_mut()[cell * state.channels() + ch] = two * w * d / count;
            }
        }
        Ok((loss / count, grad, theta))
    }

    /// Scalar loss only.
    pub fn loss(&self, state: &Grid<T>) -> Result<T, ChannelShortfall> {
        match self {
            Objective::Fixed(t) => loss_fixed(state, t),
            Objective::Invariant(t, cfg) => Ok(invariant_loss(state, t, cfg)?.loss),
        }
    }
}

/// Mean squared error between the state's compared channels and the target
/// at fixed orientation.
pub fn loss_fixed<T: Real>(state: &Grid<T>, target: &TargetSpec<T>) -> Result<T, ChannelShortfall> {
    let compared = target.compared_channels();
    if state.channels() < compared {
        return Err(ChannelShortfall { needed: compared, got: state.channels() });
    }
    Ok(weighted_mse(
        &state.slice_channels(0, compared),
        &target.compared(),
        &target.channel_weights,
    ))
}

/// Output of one differentiated rollout.
#[derive(Clone, Debug)]
pub struct BpttOutput<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    pub final_grid: Grid<T>,
    /// Alignment bin chosen by the invariant loss, when applicable.
    pub theta_bin: Option<usize>,
}

/// Roll `initial` forward `n_steps`, evaluate the objective on the final
/// state, and return exact gradients of the loss with respect to the rule
/// parameters. Update masks, alive masks, and loss alignment are
/// differentiation constants; in fixed-point mode the stencil's gradient is
/// the straight-through linear stencil.
pub fn backprop_rollout<T: Real>(
    initial: &Grid<T>,
    params: &RuleParams<T>,
    n_steps: usize,
    rng: StepRng,
    mode: StepMode,
    numerics: Numerics,
    objective: &Objective<'_, T>,
) -> Result<BpttOutput<T>, TrainError> {
    let (c, h) = (params.channels(), params.hidden());

    // forward, keeping per-step records
    let mut records: Vec<StepRecord<T>> = Vec::with_capacity(n_steps);
    let mut state = initial.clone();
    for t in 0..n_steps {
        let (next, rec) =
            step_with_record(&state, params, rng.offset(t as u64), mode, numerics, true)?;
        records.push(rec.expect("record requested"));
        state = next;
    }

    let (loss, mut g, theta_bin) = objective.evaluate(&state)?;

    // backward
    let mut grads = Gradients::zeros_like(params);
    let (height, width) = (initial.height(), initial.width());
    for rec in records.iter().rev() {
        // kill gradient where the step's alive masking zeroed the output
        for (cell, kept) in rec.kept.iter().enumerate() {
            if !kept {
                g.data_mut()[cell * c..(cell + 1) * c].fill(T::zero());
            }
        }
        let n = rec.alive_cells.len();
        if n == 0 {
            continue;
        }
        // gather dL/d(delta) rows for the gated, pre-alive cells
        let mut d_delta = vec![T::zero(); n * c];
        for (i, &cell) in rec.alive_cells.iter().enumerate() {
            if rec.updated[i] {
                d_delta[i * c..(i + 1) * c]
                    .copy_from_slice(&g.data()[cell * c..(cell + 1) * c]);
            }
        }
        // activations from the stored pre-activations
        let mut act = rec.preact_rows.clone();
        for v in &mut act {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        // dW1 += act^T . d_delta
        T::gemm_tn(h, n, c, T::one(), &act, &d_delta, T::one(), &mut grads.w1);
        // d_pre = (d_delta . W1^T) gated by relu'
        let mut d_pre = vec![T::zero(); n * h];
        T::gemm_nt(n, c, h, T::one(), &d_delta, &params.w1, T::zero(), &mut d_pre);
        for (dp, pre) in d_pre.iter_mut().zip(&rec.preact_rows) {
            if *pre <= T::zero() {
                *dp = T::zero();
            }
        }
        // db0 += column sums of d_pre
        for row in d_pre.chunks_exact(h) {
            for (b, v) in grads.b0.iter_mut().zip(row) {
                *b += *v;
            }
        }
        // dW0 += perception^T . d_pre
        T::gemm_tn(2 * c, n, h, T::one(), &rec.perception_rows, &d_pre, T::one(), &mut grads.w0);
        // d_perception = d_pre . W0^T
        let mut d_perc = vec![T::zero(); n * 2 * c];
        T::gemm_nt(n, h, 2 * c, T::one(), &d_pre, &params.w0, T::zero(), &mut d_perc);

        // scatter back to the input grid: identity path plus the two halves
        // of the perception (state part directly, stencil part through the
        // self-adjoint Laplacian)
        let mut lap_grad = Grid::zeros(height, width, c);
        for (i, &cell) in rec.alive_cells.iter().enumerate() {
            let row = &d_perc[i * 2 * c..(i + 1) * 2 * c];
            let dst_range = cell * c..(cell + 1) * c;
            let dst = &mut g.data_mut()[dst_range.clone()];
            for (d, v) in dst.iter_mut().zip(&row[..c]) {
                *d += *v;
            }
            lap_grad.data_mut()[dst_range].copy_from_slice(&row[c..]);
        }
        let lap_back = laplacian_conv(&lap_grad);
        for (d, v) in g.data_mut().iter_mut().zip(lap_back.data()) {
            *d += *v;
        }
    }

    Ok(BpttOutput { loss, grads, final_grid: state, theta_bin })
}

/// Adam optimizer state for the three parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    m: Gradients<T>,
    v: Gradients<T>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &RuleParams<T>) -> Self {
        Self {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn apply(&mut self, params: &mut RuleParams<T>, grads: &Gradients<T>, lr: f64) {
        self.t += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let bc1 = T::of(1.0 - num_traits::Float::powi(self.beta1, self.t as i32));
        let bc2 = T::of(1.0 - num_traits::Float::powi(self.beta2, self.t as i32));
        let lr = T::of(lr);
        let eps = T::of(self.eps);
        let slots = [
            (&mut params.w0, &grads.w0, &mut self.m.w0, &mut self.v.w0),
            (&mut params.b0, &grads.b0, &mut self.m.b0, &mut self.v.b0),
            (&mut params.w1, &grads.w1, &mut self.m.w1, &mut self.v.w1),
        ];
        for (p, g, m, v) in slots {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Pool of previously grown states with per-entry ages.
#[derive(Clone, Debug)]
pub struct SamplePool<T> {
    pub entries: Vec<Grid<T>>,
    pub ages: Vec<u32>,
}

impl<T: Real> SamplePool<T> {
    pub fn filled_with_seed(size: usize, seed_grid: &Grid<T>) -> Self {
        Self { entries: vec![seed_grid.clone(); size], ages: vec![0; size] }
    }

    /// Distinct indices, uniformly without replacement.
    pub fn sample_indices(&self, k: usize, stream: &mut Stream) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        for i in 0..k.min(order.len()) {
            let j = i + stream.next_below(order.len() - i);
            order.swap(i, j);
        }
        order.truncate(k);
        order
    }
}

/// Per-step training metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    /// Mean batch loss.
    pub loss: f64,
    /// Pool entries replaced by fresh seeds this step (routine reseed plus
    /// any non-finite evictions).
    pub pool_resets: usize,
    /// Most common alignment bin across the batch (single-seed strategy).
    pub theta_bin: Option<usize>,
}

/// Training driver: owns the parameters, pool, optimizer state, and target.
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub params: RuleParams<T>,
    pub pool: SamplePool<T>,
    pub target: TargetSpec<T>,
    /// Polar configuration; drives the single-seed objective.
    pub polar: PolarConfig,
    seed_grid: Grid<T>,
    adam: Adam<T>,
    step_idx: usize,
    mode: StepMode,
    numerics: Numerics,
}

impl<T: Real> Trainer<T> {
    pub fn new(
        config: TrainConfig,
        params: RuleParams<T>,
        target: TargetSpec<T>,
        polar: PolarConfig,
        seed_grid: Grid<T>,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let pool = SamplePool::filled_with_seed(config.pool, &seed_grid);
        let adam = Adam::new(&params);
        Ok(Self {
            config,
            params,
            pool,
            target,
            polar,
            seed_grid,
            adam,
            step_idx: 0,
            mode: StepMode::Stochastic,
            numerics: Numerics::Float,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step_idx
    }

    pub fn seed_grid(&self) -> &Grid<T> {
        &self.seed_grid
    }

    /// The objective this trainer's strategy scores rollouts with.
    pub fn objective(&self) -> Objective<'_, T> {
        match self.config.strategy {
            Strategy::StructuredSeed => Objective::Fixed(&self.target),
            Strategy::SingleSeed => Objective::Invariant(&self.target, &self.polar),
        }
    }

    /// Current learning rate under the halving schedule.
    pub fn learning_rate(&self) -> f64 {
        let cutoff = (self.config.total_steps as f64 * self.config.lr_half_at) as usize;
        if self.step_idx >= cutoff {
            self.config.learning_rate * 0.5
        } else {
            self.config.learning_rate
        }
    }

    /// One optimization step. Deterministic for a fixed `(config, seed)`:
    /// sample work is keyed by counters, and batch gradients are reduced in
    /// slot order no matter how the batch was scheduled.
    pub fn step(&mut self) -> Result<StepMetrics, TrainError> {
        let step_idx = self.step_idx;
        let mut stream = Stream::new(self.config.seed).fork(step_idx as u64);
        let batch = self.config.batch;

        let indices = self.pool.sample_indices(batch, &mut stream);

        // rank sampled entries by current loss; reseed the worst
        // (field-precise borrow so the pool stays writable)
        let objective = match self.config.strategy {
            Strategy::StructuredSeed => Objective::Fixed(&self.target),
            Strategy::SingleSeed => Objective::Invariant(&self.target, &self.polar),
        };
        let mut worst: Option<(usize, T)> = None;
        for &idx in &indices {
            let l = objective.loss(&self.pool.entries[idx])?;
            if worst.map(|(_, w)| l > w).unwrap_or(true) {
                worst = Some((idx, l));
            }
        }
        let mut pool_resets = 0usize;
        if let Some((idx, _)) = worst {
            self.pool.entries[idx] = self.seed_grid.clone();
            self.pool.ages[idx] = 0;
            pool_resets += 1;
        }

        // fixed work plan: rollout lengths and rng seeds drawn before any
        // parallelism so the schedule cannot perturb them
        let plan: Vec<(usize, usize, u64)> = indices
            .iter()
            .map(|&idx| {
                let n_steps = stream.next_range(self.config.steps_min, self.config.steps_max);
                let rollout_seed =
                    mix64(mix64(self.config.seed) ^ mix64(step_idx as u64) ^ idx as u64);
                (idx, n_steps, rollout_seed)
            })
            .collect();

        let run_one = |&(idx, n_steps, rollout_seed): &(usize, usize, u64)| {
            backprop_rollout(
                &self.pool.entries[idx],
                &self.params,
                n_steps,
                StepRng::new(rollout_seed),
                self.mode,
                self.numerics,
                &objective,
            )
        };

        #[cfg(feature = "parallel")]
        let results: Vec<Result<BpttOutput<T>, TrainError>> = {
            use rayon::prelude::*;
            plan.par_iter().map(run_one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<BpttOutput<T>, TrainError>> = plan.iter().map(run_one).collect();

        // reduce in slot order
        let mut grads = Gradients::zeros_like(&self.params);
        let mut loss_sum = T::zero();
        let mut theta_counts: Vec<(usize, usize)> = Vec::new();
        let mut finals: Vec<(usize, Grid<T>)> = Vec::with_capacity(batch);
        let inv_batch = T::of(1.0 / batch as f64);
        for (slot, result) in results.into_iter().enumerate() {
            let out = result?;
            loss_sum += out.loss;
            grads.add_scaled(&out.grads, inv_batch);
            if let Some(bin) = out.theta_bin {
                match theta_counts.iter_mut().find(|(b, _)| *b == bin) {
                    Some((_, n)) => *n += 1,
                    None => theta_counts.push((bin, 1)),
                }
            }
            finals.push((plan[slot].0, out.final_grid));
        }
        let loss = (loss_sum * inv_batch).to_f64_lossy();
        if !loss.is_finite() || !grads.is_finite() {
            return Err(TrainError::NonFinite { step: step_idx });
        }

        if self.config.grad_norm {
            grads.normalize_per_layer();
        }
        let lr = self.learning_rate();
        self.adam.apply(&mut self.params, &grads, lr);

        // write back final states; evict anything non-finite
        for (idx, grid) in finals {
            if grid.is_finite() {
                self.pool.entries[idx] = grid;
                self.pool.ages[idx] += 1;
            } else {
                self.pool.entries[idx] = self.seed_grid.clone();
                self.pool.ages[idx] = 0;
                pool_resets += 1;
            }
        }

        self.step_idx += 1;
        Ok(StepMetrics {
            step: step_idx,
            loss,
            pool_resets,
            theta_bin: theta_counts.iter().max_by_key(|(_, n)| *n).map(|(b, _)| *b),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{init_single_seed, init_structured_seed, make_uniform_circle_seed};
    use crate::polar::image_center;
    use crate::rule::init_params;
    use crate::target::AuxKind;

    fn small_target(h: usize, w: usize, aux: &[AuxKind]) -> TargetSpec<f64> {
        let mut rgba: Grid<f64> = Grid::zeros(h, w, 4);
        let (cy, cx) = image_center(&rgba);
        for r in 0..h {
            for c in 0..w {
                let dy = (r as f64 - cy) / h as f64;
                let dx = (c as f64 - cx) / w as f64;
                let a = (1.0 - 3.0 * (dx * dx + 1.8 * dy * dy)).max(0.0).min(1.0);
                if a > 0.0 {
                    rgba.set(r, c, 0, (a * (0.5 + dx).clamp(0.0, 1.0)).min(a));
                    rgba.set(r, c, 1, (a * 0.3).min(a));
                    rgba.set(r, c, 3, a);
                }
            }
        }
        TargetSpec::from_premultiplied_rgba(&rgba, 0, aux).unwrap()
    }

    fn tiny_params(c: usize, h: usize, seed: u64, w1_std: f64) -> RuleParams<f64> {
        let mut rng = Stream::new(seed);
        let mut p = init_params(c, h, &mut rng);
        for v in &mut p.w1 {
            *v = rng.next_normal() * w1_std;
        }
        // keep preactivations away from the relu kink for finite differences
        for v in &mut p.b0 {
            *v = rng.next_normal() * 0.3;
        }
        p
    }

    /// Alpha channel biased well away from the 0.1 alive threshold so the
    /// finite-difference probes cannot flip a mask bit.
    fn fd_safe_grid(h: usize, w: usize, c: usize, seed: u64) -> Grid<f64> {
        let mut rng = Stream::new(seed);
        let mut g = Grid::zeros(h, w, c);
        for r in 0..h {
            for col in 0..w {
                for ch in 0..c {
                    let v = if ch == 3 {
                        0.4 + 0.5 * rng.next_f64()
                    } else {
                        rng.next_f64() - 0.5
                    };
                    g.set(r, col, ch, v);
                }
            }
        }
        g
    }

    fn flat_params(p: &RuleParams<f64>) -> Vec<f64> {
        p.w0.iter().chain(&p.b0).chain(&p.w1).copied().collect()
    }

    fn set_flat(p: &mut RuleParams<f64>, flat: &[f64]) {
        let (n0, n1) = (p.w0.len(), p.b0.len());
        p.w0.copy_from_slice(&flat[..n0]);
        p.b0.copy_from_slice(&flat[n0..n0 + n1]);
        p.w1.copy_from_slice(&flat[n0 + n1..]);
    }

    fn flat_grads(g: &Gradients<f64>) -> Vec<f64> {
        g.w0.iter().chain(&g.b0).chain(&g.w1).copied().collect()
    }

    /// Central finite differences of the rollout loss over every parameter.
    fn fd_gradients(
        initial: &Grid<f64>,
        params: &RuleParams<f64>,
        n_steps: usize,
        rng: StepRng,
        objective: &Objective<'_, f64>,
        h: f64,
    ) -> Vec<f64> {
        let flat = flat_params(params);
        let mut out = Vec::with_capacity(flat.len());
        let mut probe = params.clone();
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            set_flat(&mut probe, &plus);
            let lp = backprop_rollout(
                initial, &probe, n_steps, rng, StepMode::Stochastic, Numerics::Float, objective,
            )
            .unwrap()
            .loss;
            let mut minus = flat.clone();
            minus[i] -= h;
            set_flat(&mut probe, &minus);
            let lm = backprop_rollout(
                initial, &probe, n_steps, rng, StepMode::Stochastic, Numerics::Float, objective,
            )
            .unwrap()
            .loss;
            out.push((lp - lm) / (2.0 * h));
        }
        out
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
            .fold(0.0, f64::max)
    }

    #[test]
    fn loss_fixed_planted_target_is_zero() {
        let target = small_target(6, 6, &[]);
        let mut state: Grid<f64> = Grid::zeros(6, 6, 8);
        let t = target.compared();
        for cell in 0..36 {
            state.data_mut()[cell * 8..cell * 8 + 4]
                .copy_from_slice(&t.data()[cell * 4..(cell + 1) * 4]);
        }
        let l = loss_fixed(&state, &target).unwrap();
        assert!(l < 1e-10);
    }

    #[test]
    fn loss_fixed_zero_state_equals_target_mean_square() {
        let target = small_target(5, 7, &[]);
        let state: Grid<f64> = Grid::zeros(5, 7, 6);
        let l = loss_fixed(&state, &target).unwrap();
        let t = target.compared();
        let want = t.data().iter().map(|v| v * v).sum::<f64>() / t.data().len() as f64;
        assert!((l - want).abs() < 1e-12);
    }

    #[test]
    fn loss_fixed_matches_loop_oracle() {
        let target = small_target(4, 4, &[AuxKind::Binary]);
        let mut rng = Stream::new(3);
        let mut state: Grid<f64> = Grid::zeros(4, 4, 8);
        for v in state.data_mut() {
            *v = rng.next_f64();
        }
        let l = loss_fixed(&state, &target).unwrap();
        let t = target.compared();
        let mut acc = 0.0;
        for cell in 0..16 {
            for ch in 0..5 {
                let d = state.data()[cell * 8 + ch] - t.data()[cell * 5 + ch];
                acc += d * d;
            }
        }
        assert!((l - acc / (16.0 * 5.0)).abs() < 1e-7);
    }

    #[test]
    fn gradient_matches_finite_differences_one_step() {
        let target = small_target(6, 6, &[]);
        let objective = Objective::Fixed(&target);
        let params = tiny_params(5, 8, 42, 0.1);
        let grid = fd_safe_grid(6, 6, 5, 43);
        let rng = StepRng::new(7);
        let out = backprop_rollout(
            &grid, &params, 1, rng, StepMode::Stochastic, Numerics::Float, &objective,
        )
        .unwrap();
        let numeric = fd_gradients(&grid, &params, 1, rng, &objective, 1e-4);
        let err = max_rel_err(&flat_grads(&out.grads), &numeric);
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn gradient_matches_finite_differences_three_steps() {
        let target = small_target(6, 6, &[]);
        let objective = Objective::Fixed(&target);
        for seed in 0..4 {
            let params = tiny_params(5, 8, 100 + seed, 0.08);
            let grid = fd_safe_grid(6, 6, 5, 200 + seed);
            let rng = StepRng::new(300 + seed);
            let out = backprop_rollout(
                &grid, &params, 3, rng, StepMode::Stochastic, Numerics::Float, &objective,
            )
            .unwrap();
            let numeric = fd_gradients(&grid, &params, 3, rng, &objective, 1e-5);
            let err = max_rel_err(&flat_grads(&out.grads), &numeric);
            assert!(err < 1e-3, "seed {seed}: max rel err {err}");
        }
    }

    #[test]
    fn gradient_with_invariant_loss_matches_finite_differences() {
        let target = small_target(8, 8, &[]);
        let cfg = PolarConfig {
            n_theta: 32,
            n_r: 4,
            sharpen_k: 0.5,
            sharpen_radius: 1.0,
            area_weighted: true,
        };
        let objective = Objective::Invariant(&target, &cfg);
        let params = tiny_params(5, 8, 51, 0.05);
        let grid = fd_safe_grid(8, 8, 5, 52);
        let rng = StepRng::new(53);
        let out = backprop_rollout(
            &grid, &params, 2, rng, StepMode::Stochastic, Numerics::Float, &objective,
        )
        .unwrap();
        let numeric = fd_gradients(&grid, &params, 2, rng, &objective, 1e-5);
        let err = max_rel_err(&flat_grads(&out.grads), &numeric);
        // probing can re-select the alignment bin, which adds a little noise
        assert!(err < 5e-3, "max rel err {err}");
    }

    #[test]
    fn zero_w1_first_step_gradient_structure() {
        // with W1 = 0 the only first-order path to the loss is through W1
        let target = small_target(6, 6, &[]);
        let objective = Objective::Fixed(&target);
        let mut rng = Stream::new(1);
        let mut params: RuleParams<f64> = init_params(5, 8, &mut rng);
        for v in &mut params.b0 {
            *v = 0.2 + 0.1 * rng.next_f64();
        }
        let grid = fd_safe_grid(6, 6, 5, 2);
        let out = backprop_rollout(
            &grid,
            &params,
            1,
            StepRng::new(3),
            StepMode::Stochastic,
            Numerics::Float,
            &objective,
        )
        .unwrap();
        let gw1_norm: f64 = out.grads.w1.iter().map(|v| v * v).sum();
        let gw0_norm: f64 = out.grads.w0.iter().map(|v| v * v).sum();
        assert!(gw1_norm > 0.0, "W1 gradient must be nonzero");
        assert!(gw0_norm == 0.0, "W0 gradient must vanish when W1 = 0");
    }

    #[test]
    fn loss_scaling_scales_gradients_linearly() {
        let target = small_target(6, 6, &[]);
        let mut scaled = small_target(6, 6, &[]);
        for w in &mut scaled.channel_weights {
            *w = 2.0;
        }
        let params = tiny_params(5, 8, 61, 0.1);
        let grid = fd_safe_grid(6, 6, 5, 62);
        let rng = StepRng::new(63);
        let a = backprop_rollout(
            &grid, &params, 2, rng, StepMode::Stochastic, Numerics::Float,
            &Objective::Fixed(&target),
        )
        .unwrap();
        let b = backprop_rollout(
            &grid, &params, 2, rng, StepMode::Stochastic, Numerics::Float,
            &Objective::Fixed(&scaled),
        )
        .unwrap();
        assert!((b.loss - 2.0 * a.loss).abs() < 1e-10);
        for (x, y) in flat_grads(&a.grads).iter().zip(flat_grads(&b.grads)) {
            assert!((y - 2.0 * x).abs() < 1e-10);
        }
    }

    #[test]
    fn trainer_runs_are_bitwise_deterministic() {
        let target = small_target(8, 8, &[]);
        let config = TrainConfig {
            batch: 2,
            pool: 8,
            steps_min: 4,
            steps_max: 8,
            total_steps: 10,
            ..TrainConfig::default()
        };
        let polar = PolarConfig::for_size(8);
        let seed_grid: Grid<f64> = init_single_seed(8, 8, 6).unwrap();
        let run = || {
            let mut rng = Stream::new(5);
            let params: RuleParams<f64> = init_params(6, 10, &mut rng);
            let mut tr = Trainer::new(
                config.clone(),
                params,
                target.clone(),
                polar.clone(),
                seed_grid.clone(),
            )
            .unwrap();
            let mut metrics = Vec::new();
            for _ in 0..6 {
                metrics.push(tr.step().unwrap());
            }
            (metrics, tr.params)
        };
        let (m1, p1) = run();
        let (m2, p2) = run();
        assert_eq!(m1, m2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn trainer_reseeds_exactly_one_entry_per_step_when_finite() {
        let target = small_target(8, 8, &[]);
        let config = TrainConfig {
            batch: 3,
            pool: 6,
            steps_min: 2,
            steps_max: 4,
            total_steps: 10,
            ..TrainConfig::default()
        };
        let polar = PolarConfig::for_size(8);
        let seed_grid: Grid<f64> = init_single_seed(8, 8, 6).unwrap();
        let mut rng = Stream::new(6);
        let params: RuleParams<f64> = init_params(6, 10, &mut rng);
        let mut tr = Trainer::new(config, params, target, polar, seed_grid).unwrap();
        for _ in 0..4 {
            let m = tr.step().unwrap();
            assert_eq!(m.pool_resets, 1);
        }
    }

    #[test]
    fn trainer_pool_stays_finite() {
        let target = small_target(8, 8, &[]);
        let config = TrainConfig {
            batch: 2,
            pool: 4,
            steps_min: 2,
            steps_max: 6,
            total_steps: 20,
            ..TrainConfig::default()
        };
        let polar = PolarConfig::for_size(8);
        let seed_grid: Grid<f64> = init_single_seed(8, 8, 6).unwrap();
        let mut rng = Stream::new(7);
        let params: RuleParams<f64> = init_params(6, 10, &mut rng);
        let mut tr = Trainer::new(config, params, target, polar, seed_grid).unwrap();
        for _ in 0..10 {
            tr.step().unwrap();
            for e in &tr.pool.entries {
                assert!(e.is_finite());
            }
        }
    }

    #[test]
    fn smoke_training_reduces_loss_on_solid_square() {
        // structured-seed strategy on an 8x8 solid square
        let mut rgba: Grid<f64> = Grid::zeros(8, 8, 4);
        for r in 2..6 {
            for c in 2..6 {
                rgba.cell_mut(r, c).copy_from_slice(&[0.8, 0.2, 0.1, 1.0]);
            }
        }
        let target = TargetSpec::from_premultiplied_rgba(&rgba, 0, &[]).unwrap();
        let seed = make_uniform_circle_seed(3, 2.0, 8).unwrap();
        let seed_grid = init_structured_seed(8, 8, &seed, 8).unwrap();
        let mut rng = Stream::new(11);
        let params: RuleParams<f64> = init_params(8, 32, &mut rng);
        let config = TrainConfig {
            batch: 4,
            pool: 16,
            steps_min: 8,
            steps_max: 16,
            learning_rate: 3e-3,
            total_steps: 200,
            ..TrainConfig::default()
        };
        let mut tr =
            Trainer::new(config, params, target, PolarConfig::for_size(8), seed_grid).unwrap();
        let first = tr.step().unwrap().loss;
        let mut last = first;
        for _ in 0..199 {
            last = tr.step().unwrap().loss;
        }
        assert!(
            last < 0.25 * first,
            "loss should drop at least 4x in 200 steps: {first} -> {last}"
        );
    }
}
