//! Generate a small asymmetric test pattern PNG, for smoke runs.
use std::env;

fn main() {
    let out = env::args().nth(1).unwrap_or_else(|| "blob.png".into());
    let size: u32 = env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let mut img = image::RgbaImage::new(size, size);
    let half = (size as f32 - 1.0) / 2.0;
    for r in 0..size {
        for c in 0..size {
            let dy = (r as f32 - half) / half;
            let dx = (c as f32 - half) / half;
            let a = (1.0 - 1.8 * (dx * dx + 1.5 * dy * dy + 0.4 * dx * dy) - 0.3 * dy)
                .max(0.0)
                .min(1.0);
            let px = [
                (a * (0.6 + 0.4 * dx).clamp(0.0, 1.0) * 255.0) as u8,
                (a * 0.55 * 255.0) as u8,
                (a * (0.5 - 0.5 * dy).clamp(0.0, 1.0) * 255.0) as u8,
                (a * 255.0) as u8,
            ];
            img.put_pixel(c, r, image::Rgba(px));
        }
    }
    img.save(&out).unwrap();
    eprintln!("wrote {out}");
}
