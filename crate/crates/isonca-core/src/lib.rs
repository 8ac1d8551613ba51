//! Isotropic neural cellular automata.
//!
//! A cell grid evolves under a learned local rule whose perception is a
//! per-channel 3x3 Laplacian, making the rule invariant to rotations and
//! reflections of the grid. The crate provides:
//!
//! - the cell lattice, seed construction, and alive/empty masking ([`grid`])
//! - the rotation-symmetric perception, including a fixed-point variant whose
//!   accumulation is exactly associative ([`perception`])
//! - the two-layer update network and stochastic stepping ([`rule`])
//! - a rotation/reflection-invariant pattern loss computed in polar
//!   coordinates via FFT correlation ([`loss`], [`polar`], [`target`])
//! - backpropagation-through-time training with a persistence pool ([`train`])
//! - transfer of trained rules onto Voronoi graphs built from Poisson-disk
//!   samples ([`graph`])
//!
//! The crate is `no_std`-compatible (`default-features = false`); everything
//! operates on plain heap buffers. IO, file formats, and the CLI live in the
//! companion `isonca` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod fft;
pub mod graph;
pub mod grid;
pub mod loss;
pub mod perception;
pub mod polar;
pub mod real;
pub mod rng;
pub mod rule;
pub mod target;
pub mod train;

pub use graph::{
    build_voronoi_adjacency, graph_laplacian, graph_nca_step, poisson_disk_sample, seed_irregular,
    GraphError, GraphSeed, IrregularGrid, Neighbor, PointSet,
};
pub use grid::{
    alive_mask, apply_alive_masking, init_single_seed, init_structured_seed,
    make_uniform_circle_seed, AliveMask, Grid, GridError, SeedPoint, StructuredSeed, D4,
    ALIVE_THRESHOLD, ALPHA_CHANNEL,
};
pub use loss::{
    alignment_profile, invariant_loss, rotation_loss_profile, sharpen, InvariantLoss,
    LossProfile, PolarConfig,
};
pub use perception::{laplacian_conv, laplacian_conv_fixed_point, perceive, Numerics, LAPLACIAN};
pub use polar::{reflect_image, rotate_image, to_polar, PolarImage};
pub use real::Real;
pub use rng::{StepRng, Stream};
pub use rule::{init_params, nca_step, rollout, rule_forward, RolloutResult, RuleParams, StepMode};
pub use target::{make_binary_aux, make_radial_aux, premultiply, AuxKind, TargetSpec};
pub use train::{
    backprop_rollout, loss_fixed, Adam, BpttOutput, Gradients, Objective, SamplePool,
    StepMetrics, Strategy, TrainConfig, TrainError, Trainer,
};
