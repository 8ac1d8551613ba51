//! Voronoi graph rendering: rasterized PNG (scanline polygon fill) and exact
//! SVG polygons. Each cell is filled with its node's RGBA (premultiplied,
//! clamped), matching the grid PNG export convention.

use std::fmt::Write as _;
use std::path::Path;

use image::RgbaImage;

use isonca_core::graph::IrregularGrid;
use isonca_core::Real;

use crate::error::CliError;

fn node_color<T: Real>(grid: &IrregularGrid<T>, i: usize) -> [u8; 4] {
    let s = grid.state(i);
    let mut out = [0u8; 4];
    for ch in 0..4.min(s.len()) {
        out[ch] = (s[ch].to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    out
}

/// Rasterize the graph at `scale` pixels per domain unit.
pub fn render_png<T: Real>(grid: &IrregularGrid<T>, scale: f64) -> Result<Vec<u8>, CliError> {
    let w = (grid.width * scale).ceil() as u32;
    let h = (grid.height * scale).ceil() as u32;
    let mut img = RgbaImage::new(w.max(1), h.max(1));
    for i in 0..grid.len() {
        let poly = grid.cell_polygon(i);
        if poly.len() < 3 {
            continue;
        }
        let color = image::Rgba(node_color(grid, i));
        if color.0 == [0, 0, 0, 0] {
            continue;
        }
        let ys: Vec<f64> = poly.iter().map(|p| p[1] * scale).collect();
        let y_min = ys.iter().fold(f64::INFINITY, |a, b| a.min(*b)).floor().max(0.0) as u32;
        let y_max = ys.iter().fold(0.0f64, |a, b| a.max(*b)).ceil().min(h as f64) as u32;
        for py in y_min..y_max {
            let yc = py as f64 + 0.5;
            // intersect the scanline with all polygon edges
            let mut xs: Vec<f64> = Vec::new();
            for k in 0..poly.len() {
                let a = poly[k];
                let b = poly[(k + 1) % poly.len()];
                let (ya, yb) = (a[1] * scale, b[1] * scale);
                if (ya <= yc) != (yb <= yc) {
                    let t = (yc - ya) / (yb - ya);
                    xs.push((a[0] + t * (b[0] - a[0])) * scale);
                }
            }
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in xs.chunks_exact(2) {
                let x0 = pair[0].max(0.0).round() as u32;
                let x1 = pair[1].min(w as f64).round() as u32;
                for px in x0..x1 {
                    img.put_pixel(px, py, color);
                }
            }
        }
    }
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

pub fn write_png<T: Real>(path: &Path, grid: &IrregularGrid<T>, scale: f64) -> Result<(), CliError> {
    std::fs::write(path, render_png(grid, scale)?)?;
    Ok(())
}

/// Exact cell polygons as SVG.
pub fn render_svg<T: Real>(grid: &IrregularGrid<T>) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {} {}">"#,
        grid.width, grid.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="black"/>"#);
    for i in 0..grid.len() {
        let poly = grid.cell_polygon(i);
        if poly.len() < 3 {
            continue;
        }
        let [r, g, b, a] = node_color(grid, i);
        if a == 0 && r == 0 && g == 0 && b == 0 {
            continue;
        }
        let mut points = String::new();
        for p in poly {
            let _ = write!(points, "{:.4},{:.4} ", p[0], p[1]);
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="rgb({},{},{})" fill-opacity="{:.4}"/>"#,
            points.trim_end(),
            r,
            g,
            b,
            a as f64 / 255.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg<T: Real>(path: &Path, grid: &IrregularGrid<T>) -> Result<(), CliError> {
    std::fs::write(path, render_svg(grid))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use isonca_core::graph::{build_voronoi_adjacency, poisson_disk_sample, seed_irregular, GraphSeed};
    use isonca_core::Stream;

    #[test]
    fn seeded_node_is_visible_in_frame_zero() {
        let mut stream = Stream::new(3);
        let set = poisson_disk_sample(30.0, 30.0, 3.0, 30, &mut stream).unwrap();
        let mut grid = build_voronoi_adjacency::<f32>(&set, 16).unwrap();
        seed_irregular(&mut grid, &GraphSeed::Single).unwrap();
        let png = render_png(&grid, 4.0).unwrap();
        let img = image::load_from_memory(&png).unwrap().to_rgba8();
        // exactly one cell carries nonzero alpha
        let lit = img.pixels().filter(|p| p.0[3] > 0).count();
        assert!(lit > 0, "seeded cell must rasterize to at least one pixel");
        let svg = render_svg(&grid);
        assert!(svg.contains("<polygon"));
    }
}
