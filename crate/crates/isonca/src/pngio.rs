//! PNG import/export for grids and targets.

use std::path::Path;

use image::{ImageFormat, RgbaImage};

use isonca_core::target::TargetError;
use isonca_core::{premultiply, AuxKind, Grid, TargetSpec};

use crate::error::CliError;

/// Decode a PNG into a straight-alpha RGBA grid in `[0, 1]`.
pub fn decode_rgba(bytes: &[u8]) -> Result<Grid<f32>, CliError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgba8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut grid = Grid::zeros(h, w, 4);
    for (r, row) in img.rows().enumerate() {
        for (c, px) in row.enumerate() {
            for ch in 0..4 {
                grid.set(r, c, ch, px.0[ch] as f32 / 255.0);
            }
        }
    }
    Ok(grid)
}

/// Decode, premultiply, pad, and attach auxiliary channels.
pub fn prepare_target(
    png_bytes: &[u8],
    pad: usize,
    aux_kinds: &[AuxKind],
) -> Result<TargetSpec<f32>, CliError> {
    let mut rgba = decode_rgba(png_bytes)?;
    premultiply(&mut rgba);
    TargetSpec::from_premultiplied_rgba(&rgba, pad, aux_kinds).map_err(|e: TargetError| {
        CliError::config(e.to_string())
    })
}

/// Encode channels 0-3 (premultiplied, clamped to `[0, 1]`) as an 8-bit PNG.
pub fn grid_to_png(grid: &Grid<f32>) -> Result<Vec<u8>, CliError> {
    if grid.channels() < 4 {
        return Err(CliError::config("grid needs at least 4 channels for PNG export"));
    }
    let mut img = RgbaImage::new(grid.width() as u32, grid.height() as u32);
    for r in 0..grid.height() {
        for c in 0..grid.width() {
            let px = grid.cell(r, c);
            let mut bytes = [0u8; 4];
            for ch in 0..4 {
                bytes[ch] = (px[ch].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
            img.put_pixel(c as u32, r as u32, image::Rgba(bytes));
        }
    }
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), ImageFormat::Png)?;
    Ok(out)
}

pub fn write_grid_png(path: &Path, grid: &Grid<f32>) -> Result<(), CliError> {
    std::fs::write(path, grid_to_png(grid)?)?;
    Ok(())
}
