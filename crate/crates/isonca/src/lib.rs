//! IO, file formats, and the command-line surface for the isotropic NCA
//! engine. All simulation and training math lives in `isonca-core`; this
//! crate adds PNG import/export, JSON configs, checkpoints, metrics logs,
//! Voronoi rendering, and the `isonca` binary's subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pngio;
pub mod render;

pub use error::CliError;
