//! Checkpoint format: a 4-byte little-endian header length, a JSON header,
//! then a little-endian f32 blob of W0 (row-major), b0, W1 concatenated. The
//! header carries the blob length and a SHA-256 checksum of the blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use isonca_core::RuleParams;

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub channels: usize,
    pub hidden: usize,
    pub p_upd: f64,
    /// Fixed-point fractional bits the rule was meant to run with, if any.
    pub frac_bits: Option<u32>,
    /// Blob size in bytes.
    pub blob_len: usize,
    /// Hex SHA-256 of the blob.
    pub checksum: String,
}

fn blob_of(params: &RuleParams<f32>) -> Vec<u8> {
    let mut blob = Vec::with_capacity(4 * params.param_count());
    for v in params.w0.iter().chain(&params.b0).chain(&params.w1) {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    blob
}

pub fn save(
    path: &Path,
    params: &RuleParams<f32>,
    frac_bits: Option<u32>,
) -> Result<(), CliError> {
    let blob = blob_of(params);
    let header = CheckpointHeader {
        channels: params.channels(),
        hidden: params.hidden(),
        p_upd: params.p_upd,
        frac_bits,
        blob_len: blob.len(),
        checksum: format!("{:x}", Sha256::digest(&blob)),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(4 + header_bytes.len() + blob.len());
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&blob);
    fs::write(path, out)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(RuleParams<f32>, CheckpointHeader), CliError> {
    let bytes = fs::read(path).map_err(|e| {
        CliError::config(format!("cannot read checkpoint {}: {e}", path.display()))
    })?;
    if bytes.len() < 4 {
        return Err(CliError::config(format!("checkpoint {} is truncated", path.display())));
    }
    let header_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + header_len {
        return Err(CliError::config("checkpoint header is truncated"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[4..4 + header_len])?;
    let blob = &bytes[4 + header_len..];
    if blob.len() != header.blob_len {
        return Err(CliError::config(format!(
            "checkpoint blob length {} does not match header {}",
            blob.len(),
            header.blob_len
        )));
    }
    let checksum = format!("{:x}", Sha256::digest(blob));
    if checksum != header.checksum {
        return Err(CliError::config("checkpoint checksum mismatch"));
    }
    let expected = 4 * (2 * header.channels * header.hidden
        + header.hidden
        + header.hidden * header.channels);
    if blob.len() != expected {
        return Err(CliError::config(format!(
            "checkpoint blob length {} does not match architecture ({} expected)",
            blob.len(),
            expected
        )));
    }
    let mut floats = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    let w0: Vec<f32> = floats.by_ref().take(2 * header.channels * header.hidden).collect();
    let b0: Vec<f32> = floats.by_ref().take(header.hidden).collect();
    let w1: Vec<f32> = floats.collect();
    let params = RuleParams::new(header.channels, header.hidden, header.p_upd, w0, b0, w1);
    Ok((params, header))
}
