//! PNG renderings of recall curves and similarity matrices.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

pub const CURVE_SIZE: (u32, u32) = (480, 360);
const MARGIN: u32 = 40;
const MARKER: i64 = 3;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);

/// Distinct line colours, cycled per curve.
pub const PALETTE: [Rgb<u8>; 4] = [
    Rgb([214, 39, 40]),
    Rgb([31, 119, 180]),
    Rgb([44, 160, 44]),
    Rgb([148, 103, 189]),
];

/// Layout shared by drawing and by callers probing the image.
#[derive(Clone, Copy, Debug)]
pub struct CurveFrame {
    pub max_n: usize,
}

impl CurveFrame {
    /// Pixel centre of the point `(n, recall)`; recall spans `[0, 1]`.
    pub fn pixel(&self, n: usize, recall: f64) -> (u32, u32) {
        let (w, h) = CURVE_SIZE;
        let span_x = (w - 2 * MARGIN) as f64;
        let span_y = (h - 2 * MARGIN) as f64;
        let fx = if self.max_n > 1 { (n - 1) as f64 / (self.max_n - 1) as f64 } else { 0.5 };
        let x = MARGIN as f64 + fx * span_x;
        let y = (h - MARGIN) as f64 - recall.clamp(0.0, 1.0) * span_y;
        (x.round() as u32, y.round() as u32)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: (u32, u32), b: (u32, u32), c: Rgb<u8>) {
    let (x0, y0, x1, y1) = (a.0 as i64, a.1 as i64, b.0 as i64, b.1 as i64);
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        let x = x0 + (x1 - x0) * s / steps;
        let y = y0 + (y1 - y0) * s / steps;
        put(img, x, y, c);
    }
}

/// Recall@N curves, one colour per series, a square marker per point.
pub fn recall_curves(series: &[Vec<(usize, f64)>]) -> Result<RgbImage> {
    if series.is_empty() || series.iter().any(Vec::is_empty) {
        return Err(Error::input("recall plot needs at least one non-empty curve"));
    }
    let frame = CurveFrame {
        max_n: series.iter().flatten().map(|p| p.0).max().unwrap_or(1),
    };
    let (w, h) = CURVE_SIZE;
    let mut img = RgbImage::from_pixel(w, h, BACKGROUND);
    for tick in 0..=10 {
        let (_, y) = frame.pixel(1, tick as f64 / 10.0);
        line(&mut img, (MARGIN, y), (w - MARGIN, y), GRID);
    }
    line(&mut img, (MARGIN, h - MARGIN), (w - MARGIN, h - MARGIN), AXIS);
    line(&mut img, (MARGIN, MARGIN), (MARGIN, h - MARGIN), AXIS);
    for (k, curve) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for pair in curve.windows(2) {
            line(&mut img, frame.pixel(pair[0].0, pair[0].1), frame.pixel(pair[1].0, pair[1].1), color);
        }
        for &(n, r) in curve {
            let (cx, cy) = frame.pixel(n, r);
            for dy in -MARKER..=MARKER {
                for dx in -MARKER..=MARKER {
                    put(&mut img, cx as i64 + dx, cy as i64 + dy, color);
                }
            }
        }
    }
    Ok(img)
}

/// Blue (low) to yellow (high) ramp on `t` in `[0, 1]`.
pub fn colormap(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    Rgb([lerp(48.0, 253.0), lerp(18.0, 231.0), lerp(160.0, 37.0)])
}

/// Heatmap with `cell` pixels per entry, colours normalised to the data's
/// own minimum and maximum.
pub fn matrix_heatmap(m: &[Vec<f64>], cell: u32) -> Result<RgbImage> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) || cell == 0 {
        return Err(Error::input("heatmap needs a non-empty rectangular matrix"));
    }
    let (lo, hi) = m
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::input("heatmap values must be finite"));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::new(cols as u32 * cell, rows as u32 * cell);
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let c = colormap((v - lo) / span);
            for dy in 0..cell {
                for dx in 0..cell {
                    img.put_pixel(j as u32 * cell + dx, i as u32 * cell + dy, c);
                }
            }
        }
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::data(path, e.to_string()))
}
