//! JSON file formats: structured seeds, target configs, training configs,
//! seed edits, and graph export/import.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use isonca_core::graph::{IrregularGrid, Neighbor, PointSet};
use isonca_core::loss::PolarConfig;
use isonca_core::train::{Strategy, TrainConfig};
use isonca_core::{AuxKind, Real, SeedPoint, StructuredSeed};

use crate::error::CliError;

/// Read a user-supplied input file; failures are configuration errors, not
/// output I/O errors.
fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

/// `{ "points": [ { "dx": int, "dy": int, "rgb": [r,g,b] } ], "channels": int }`
/// with alpha implicitly 1 and hidden channels 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedFile {
    pub points: Vec<SeedPointJson>,
    pub channels: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedPointJson {
    pub dx: i64,
    pub dy: i64,
    pub rgb: [f64; 3],
}

impl SeedFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_slice(&read_input(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn to_seed<T: Real>(&self) -> StructuredSeed<T> {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut encoding = vec![T::zero(); self.channels];
                encoding[0] = T::of(p.rgb[0]);
                encoding[1] = T::of(p.rgb[1]);
                encoding[2] = T::of(p.rgb[2]);
                encoding[3] = T::one();
                SeedPoint { dx: p.dx, dy: p.dy, encoding }
            })
            .collect();
        let radius = self
            .points
            .iter()
            .map(|p| ((p.dx * p.dx + p.dy * p.dy) as f64).sqrt())
            .fold(0.0, f64::max);
        StructuredSeed { points, radius }
    }

    pub fn from_seed<T: Real>(seed: &StructuredSeed<T>, channels: usize) -> Self {
        SeedFile {
            channels,
            points: seed
                .points
                .iter()
                .map(|p| SeedPointJson {
                    dx: p.dx,
                    dy: p.dy,
                    rgb: [
                        p.encoding[0].to_f64_lossy(),
                        p.encoding[1].to_f64_lossy(),
                        p.encoding[2].to_f64_lossy(),
                    ],
                })
                .collect(),
        }
    }
}

/// Aux channel selector: `"binary"` or `{ "radial": n }`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AuxJson {
    Name(String),
    Radial { radial: u32 },
}

impl AuxJson {
    pub fn to_kind(&self) -> Result<AuxKind, CliError> {
        match self {
            AuxJson::Name(s) if s == "binary" => Ok(AuxKind::Binary),
            AuxJson::Name(s) => Err(CliError::config(format!("unknown aux kind '{s}'"))),
            AuxJson::Radial { radial } => {
                if *radial == 0 {
                    Err(CliError::config("radial mode must be >= 1"))
                } else {
                    Ok(AuxKind::Radial(*radial))
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SharpenJson {
    pub k: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolarJson {
    pub n_theta: usize,
    pub n_r: usize,
    /// Scale radius rows by sqrt(r/r_max); defaults to true.
    #[serde(default = "default_true")]
    pub area_weighted: bool,
}

fn default_true() -> bool {
    true
}

/// Target configuration:
/// `{ "image": path, "pad": int, "aux": [...], "sharpen": {...}, "polar": {...} }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetConfig {
    pub image: PathBuf,
    #[serde(default)]
    pub pad: usize,
    #[serde(default)]
    pub aux: Vec<AuxJson>,
    pub sharpen: Option<SharpenJson>,
    pub polar: Option<PolarJson>,
}

impl TargetConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_slice(&read_input(path)?)?)
    }

    pub fn aux_kinds(&self) -> Result<Vec<AuxKind>, CliError> {
        self.aux.iter().map(|a| a.to_kind()).collect()
    }

    /// Polar configuration, defaulted for the given padded size.
    pub fn polar_config(&self, padded_size: usize) -> PolarConfig {
        let mut cfg = PolarConfig::for_size(padded_size);
        if let Some(p) = &self.polar {
            cfg.n_theta = p.n_theta;
            cfg.n_r = p.n_r;
            cfg.area_weighted = p.area_weighted;
        }
        if let Some(s) = &self.sharpen {
            cfg.sharpen_k = s.k;
            cfg.sharpen_radius = s.radius;
        }
        cfg
    }
}

/// Seed selection for training and running.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedConfig {
    /// One alpha-1 cell at the grid center.
    Single,
    /// Uniform circle of colored points.
    Circle { n_points: usize, radius: f64 },
    /// Structured seed loaded from a JSON file.
    File { path: PathBuf },
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig::Single
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_p_upd")]
    pub p_upd: f64,
}

fn default_channels() -> usize {
    16
}

fn default_hidden() -> usize {
    192
}

fn default_p_upd() -> f64 {
    0.5
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { channels: 16, hidden: 192, p_upd: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainParamsJson {
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_pool")]
    pub pool: usize,
    #[serde(default = "d_steps_min")]
    pub steps_min: usize,
    #[serde(default = "d_steps_max")]
    pub steps_max: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_lr_half_at")]
    pub lr_half_at: f64,
    pub total_steps: usize,
    #[serde(default = "default_true")]
    pub grad_norm: bool,
    #[serde(default)]
    pub rng_seed: u64,
}

fn d_batch() -> usize {
    8
}
fn d_pool() -> usize {
    256
}
fn d_steps_min() -> usize {
    48
}
fn d_steps_max() -> usize {
    96
}
fn d_lr() -> f64 {
    1e-3
}
fn d_lr_half_at() -> f64 {
    0.7
}

/// Top-level training run configuration. The grid adopts the padded target
/// dimensions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub strategy: StrategyJson,
    pub target: TargetConfig,
    #[serde(default)]
    pub seed: SeedConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub train: TrainParamsJson,
    #[serde(default = "d_ckpt_stride")]
    pub checkpoint_stride: usize,
    #[serde(default = "d_log_stride")]
    pub log_stride: usize,
}

fn d_ckpt_stride() -> usize {
    500
}

fn d_log_stride() -> usize {
    50
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StrategyJson {
    StructuredSeed,
    SingleSeed,
}

impl From<StrategyJson> for Strategy {
    fn from(s: StrategyJson) -> Strategy {
        match s {
            StrategyJson::StructuredSeed => Strategy::StructuredSeed,
            StrategyJson::SingleSeed => Strategy::SingleSeed,
        }
    }
}

impl TrainRunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_slice(&read_input(path)?)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            strategy: self.strategy.into(),
            batch: self.train.batch,
            pool: self.train.pool,
            steps_min: self.train.steps_min,
            steps_max: self.train.steps_max,
            learning_rate: self.train.learning_rate,
            lr_half_at: self.train.lr_half_at,
            total_steps: self.train.total_steps,
            grad_norm: self.train.grad_norm,
            seed: self.train.rng_seed,
        }
    }
}

/// One structured-seed edit for the mutation experiments.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SeedEdit {
    /// Translate a point by (dx, dy).
    Move { point: usize, dx: i64, dy: i64 },
    /// Replace a point's RGB encoding.
    Recolor { point: usize, rgb: [f64; 3] },
    /// Exchange the encodings of two points (positions stay).
    Swap { a: usize, b: usize },
    /// Remove a point.
    Delete { point: usize },
    /// Copy a point, offsetting the copy by (dx, dy).
    Duplicate { point: usize, dx: i64, dy: i64 },
}

pub fn load_edits(path: &Path) -> Result<Vec<SeedEdit>, CliError> {
    Ok(serde_json::from_slice(&read_input(path)?)?)
}

/// Apply edits to a seed file in order.
pub fn apply_edits(seed: &SeedFile, edits: &[SeedEdit]) -> Result<SeedFile, CliError> {
    let mut out = seed.clone();
    for edit in edits {
        let check = |i: usize, len: usize| -> Result<(), CliError> {
            if i >= len {
                Err(CliError::config(format!("edit references point {i} of {len}")))
            } else {
                Ok(())
            }
        };
        match edit {
            SeedEdit::Move { point, dx, dy } => {
                check(*point, out.points.len())?;
                out.points[*point].dx += dx;
                out.points[*point].dy += dy;
            }
            SeedEdit::Recolor { point, rgb } => {
                check(*point, out.points.len())?;
                out.points[*point].rgb = *rgb;
            }
            SeedEdit::Swap { a, b } => {
                check(*a, out.points.len())?;
                check(*b, out.points.len())?;
                let tmp = out.points[*a].rgb;
                out.points[*a].rgb = out.points[*b].rgb;
                out.points[*b].rgb = tmp;
            }
            SeedEdit::Delete { point } => {
                check(*point, out.points.len())?;
                out.points.remove(*point);
            }
            SeedEdit::Duplicate { point, dx, dy } => {
                check(*point, out.points.len())?;
                let mut copy = out.points[*point].clone();
                copy.dx += dx;
                copy.dy += dy;
                out.points.push(copy);
            }
        }
    }
    Ok(out)
}

/// Graph export: node coordinates plus adjacency with shared-edge lengths.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub width: f64,
    pub height: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Per node: `[neighbor index, edge length]` pairs.
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl GraphJson {
    pub fn from_grid<T: Real>(grid: &IrregularGrid<T>) -> Self {
        GraphJson {
            width: grid.width,
            height: grid.height,
            nodes: grid.points().to_vec(),
            adjacency: (0..grid.len())
                .map(|i| {
                    grid.neighbors(i)
                        .iter()
                        .map(|nb: &Neighbor| (nb.index, nb.edge_len))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Point set for rebuilding the Voronoi graph from exported nodes.
    pub fn point_set(&self) -> PointSet {
        PointSet {
            points: self.nodes.clone(),
            width: self.width,
            height: self.height,
            r_min: 0.0,
        }
    }
}
