//! Spherical projection between LiDAR point clouds and range images.
//!
//! Rows bin elevation from `fov_up` (row 0) down to `fov_down`; columns bin
//! azimuth `atan2(y, x)` over `[-pi, pi)` with column 0 at `-pi`. When
//! several points land in one pixel the nearest one is kept. Distances and
//! intensities are stored as `f32`, matching the on-disk formats.

use std::f64::consts::PI;

use autograd::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Returns closer than this are treated as sensor self-hits and dropped.
pub const MIN_RANGE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks finiteness and the `[0, 1]` intensity range.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::input(format!("point {i} has a non-finite coordinate")));
            }
            if !(0.0..=1.0).contains(&p.intensity) {
                return Err(Error::input(format!(
                    "point {i} intensity {} outside [0, 1]",
                    p.intensity
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub height: usize,
    pub width: usize,
    /// Degrees.
    pub fov_up: f64,
    /// Degrees.
    pub fov_down: f64,
    /// Meters.
    pub max_range: f64,
}

impl Default for ProjectionConfig {
    /// 64-beam layout at the 64 x 1440 working resolution.
    fn default() -> Self {
        Self {
            height: 64,
            width: 1440,
            fov_up: 2.0,
            fov_down: -24.8,
            max_range: 80.0,
        }
    }
}

impl ProjectionConfig {
    /// 128-beam layout at 128 x 1920.
    pub fn beams128() -> Self {
        Self {
            height: 128,
            width: 1920,
            fov_up: 12.5,
            fov_down: -25.0,
            max_range: 120.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("projection height and width must be positive"));
        }
        if !(self.fov_up > self.fov_down) {
            return Err(Error::config(format!(
                "fov_up ({}) must exceed fov_down ({})",
                self.fov_up, self.fov_down
            )));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::config("max_range must be positive"));
        }
        Ok(())
    }

    fn fov_rad(&self) -> (f64, f64) {
        (self.fov_up.to_radians(), self.fov_down.to_radians())
    }

    /// Pixel containing direction `(x, y, z)`, if inside the field of view.
    pub fn pixel_of(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize)> {
        let (up, down) = self.fov_rad();
        let yaw = y.atan2(x);
        let pitch = z.atan2((x * x + y * y).sqrt());
        if pitch > up || pitch < down {
            return None;
        }
        let row = (((up - pitch) / (up - down)) * self.height as f64).floor() as usize;
        let col = (((yaw + PI) / (2.0 * PI)) * self.width as f64).floor() as usize;
        Some((row.min(self.height - 1), col.min(self.width - 1)))
    }

    /// Unit ray through the centre of pixel `(row, col)`.
    pub fn pixel_ray(&self, row: usize, col: usize) -> [f64; 3] {
        let (up, down) = self.fov_rad();
        let pitch = up - (row as f64 + 0.5) * (up - down) / self.height as f64;
        let yaw = -PI + (col as f64 + 0.5) * 2.0 * PI / self.width as f64;
        [pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin()]
    }

    /// Largest angular extent of one pixel, radians.
    pub fn angular_bin_width(&self) -> f64 {
        let (up, down) = self.fov_rad();
        ((up - down) / self.height as f64).max(2.0 * PI / self.width as f64)
    }
}

/// `H x W` grid of (distance, intensity) with an occupancy mask.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    height: usize,
    width: usize,
    distance: Vec<f32>,
    intensity: Vec<f32>,
    mask: Vec<bool>,
}

impl RangeImage {
    pub fn empty(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            distance: vec![0.0; n],
            intensity: vec![0.0; n],
            mask: vec![false; n],
        }
    }

    /// Builds an image from channel data. Pixels with distance <= 0 are
    /// cleared (both channels zero, mask false).
    pub fn from_channels(
        height: usize,
        width: usize,
        distance: Vec<f32>,
        intensity: Vec<f32>,
    ) -> Result<Self> {
        let n = height * width;
        if distance.len() != n || intensity.len() != n {
            return Err(Error::input(format!(
                "channel lengths {}/{} do not match {height}x{width}",
                distance.len(),
                intensity.len()
            )));
        }
        let mut img = Self {
            height,
            width,
            distance,
            intensity,
            mask: vec![false; n],
        };
        for k in 0..n {
            let d = img.distance[k];
            if !d.is_finite() || !img.intensity[k].is_finite() {
                return Err(Error::input(format!("non-finite value at pixel {k}")));
            }
            if d > 0.0 {
                img.mask[k] = true;
            } else {
                img.distance[k] = 0.0;
                img.intensity[k] = 0.0;
            }
        }
        Ok(img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn distance(&self) -> &[f32] {
        &self.distance
    }

    pub fn intensity(&self) -> &[f32] {
        &self.intensity
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, row: usize, col: usize) -> (f32, f32, bool) {
        let k = row * self.width + col;
        (self.distance[k], self.intensity[k], self.mask[k])
    }

    fn set(&mut self, k: usize, d: f32, i: f32) {
        self.distance[k] = d;
        self.intensity[k] = i;
        self.mask[k] = d > 0.0;
    }

    /// Network input `[1, 2, H, W]`: distance scaled by `1 / max_range`, raw
    /// intensity.
    pub fn to_tensor(&self, max_range: f64) -> Tensor {
        let n = self.height * self.width;
        let mut data = Vec::with_capacity(2 * n);
        data.extend(self.distance.iter().map(|&d| d as f64 / max_range));
        data.extend(self.intensity.iter().map(|&i| i as f64));
        Tensor::new(&[1, 2, self.height, self.width], data)
    }

    /// Inverse of [`RangeImage::to_tensor`] for one batch item. Distances
    /// are clamped to `[0, max_range]`, intensities to `[0, 1]`; pixels
    /// restored closer than the self-return cutoff become empty.
    pub fn from_tensor(t: &Tensor, batch: usize, max_range: f64) -> Self {
        let s = t.shape();
        assert_eq!(s.len(), 4);
        assert_eq!(s[1], 2, "range image tensor needs 2 channels");
        let (h, w) = (s[2], s[3]);
        let n = h * w;
        let base = batch * 2 * n;
        let mut img = Self::empty(h, w);
        for k in 0..n {
            let d = (t.data()[base + k].clamp(0.0, 1.0) * max_range) as f32;
            if (d as f64) < MIN_RANGE {
                continue;
            }
            let i = t.data()[base + n + k].clamp(0.0, 1.0) as f32;
            img.set(k, d, i);
        }
        img
    }

    /// Horizontal mirror (column order reversed).
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                let (src, dst) = (r * self.width + c, r * self.width + (self.width - 1 - c));
                out.distance[dst] = self.distance[src];
                out.intensity[dst] = self.intensity[src];
                out.mask[dst] = self.mask[src];
            }
        }
        out
    }

    /// Sub-image of `h x w` pixels starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, h: usize, w: usize) -> Self {
        assert!(row + h <= self.height && col + w <= self.width, "crop out of bounds");
        let mut out = Self::empty(h, w);
        for r in 0..h {
            for c in 0..w {
                let src = (row + r) * self.width + col + c;
                let dst = r * w + c;
                out.distance[dst] = self.distance[src];
                out.intensity[dst] = self.intensity[src];
                out.mask[dst] = self.mask[src];
            }
        }
        out
    }
}

/// Spherical projection with nearest-point-wins pixel resolution.
pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<RangeImage> {
    cfg.validate()?;
    let mut img = RangeImage::empty(cfg.height, cfg.width);
    let mut best = vec![f64::INFINITY; cfg.height * cfg.width];
    for (idx, p) in cloud.points.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::input(format!("point {idx} has a non-finite coordinate")));
        }
        // Range gates and nearest-wins both use the stored f32 distance,
        // which makes re-projecting an unprojected image exact.
        let d = p.range() as f32;
        if (d as f64) < MIN_RANGE || d as f64 > cfg.max_range {
            continue;
        }
        let Some((row, col)) = cfg.pixel_of(p.x, p.y, p.z) else {
            continue;
        };
        let k = row * cfg.width + col;
        if (d as f64) < best[k] {
            best[k] = d as f64;
            img.set(k, d, p.intensity as f32);
        }
    }
    Ok(img)
}

/// One point per valid pixel, along the pixel-centre ray at the stored range.
pub fn unproject(img: &RangeImage, cfg: &ProjectionConfig) -> Result<PointCloud> {
    cfg.validate()?;
    if img.height != cfg.height || img.width != cfg.width {
        return Err(Error::input(format!(
            "image is {}x{} but projection expects {}x{}",
            img.height, img.width, cfg.height, cfg.width
        )));
    }
    let mut points = Vec::with_capacity(img.valid_count());
    for row in 0..img.height {
        for col in 0..img.width {
            let k = row * img.width + col;
            if !img.mask[k] {
                continue;
            }
            let [dx, dy, dz] = cfg.pixel_ray(row, col);
            let d = img.distance[k] as f64;
            points.push(Point::new(d * dx, d * dy, d * dz, img.intensity[k] as f64));
        }
    }
    Ok(PointCloud::new(points))
}
