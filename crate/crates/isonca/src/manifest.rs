//! Run manifests: every command records what produced its outputs.
//! Re-running the recorded invocation with the same inputs reproduces the
//! outputs byte for byte (no timestamps are ever written).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// The subcommand that ran.
    pub command: String,
    /// Full argument vector as invoked.
    pub argv: Vec<String>,
    /// Hex SHA-256 of the config file, when the command took one.
    pub config_digest: Option<String>,
    pub rng_seed: u64,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub frame_stride: Option<usize>,
}

impl RunManifest {
    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("manifest.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    Ok(format!("{:x}", Sha256::digest(fs::read(path)?)))
}
