//! On-disk formats.
//!
//! * point clouds: little-endian `f32` records `(x, y, z, intensity)`;
//! * poses: text, `index r11 r12 r13 tx r21 r22 r23 ty r31 r32 r33 tz`;
//! * range images: `u32 H`, `u32 W`, then `H*W` interleaved `f32` pairs
//!   `(distance, intensity)`;
//! * descriptor databases: `u32 count`, `u32 D`, then `count*D` `f32`;
//! * noise flags: one byte per point;
//! * matrices: `u32 rows`, `u32 cols`, then `f32` row-major.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::pairing::Pose;
use crate::range_image::{Point, PointCloud, RangeImage};

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn header2(path: &Path, bytes: &[u8], what: &str) -> Result<(usize, usize)> {
    if bytes.len() < 8 {
        return Err(Error::data(path, format!("{what}: missing 8-byte header")));
    }
    let (a, b) = (u32_at(bytes, 0) as usize, u32_at(bytes, 4) as usize);
    let want = 8 + a * b * if what == "range image" { 8 } else { 4 };
    if bytes.len() != want {
        return Err(Error::data(
            path,
            format!("{what}: header {a}x{b} implies {want} bytes, file has {}", bytes.len()),
        ));
    }
    Ok((a, b))
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = read(path)?;
    if bytes.len() % 16 != 0 {
        return Err(Error::data(path, "length is not a multiple of 16 bytes"));
    }
    let v: Vec<f32> = f32s(&bytes).collect();
    let points = v
        .chunks_exact(4)
        .map(|c| Point::new(c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64))
        .collect();
    let cloud = PointCloud::new(points);
    cloud.validate().map_err(|e| Error::data(path, e.to_string()))?;
    Ok(cloud)
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut bytes = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write(path, &bytes)
}

pub fn parse_poses(text: &str) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 13 {
            return Err(Error::input(format!(
                "pose line {}: expected 13 fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let index = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::input(format!("pose line {}: index: {e}", lineno + 1)))?;
        let mut v = [0.0; 12];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse::<f64>()
                .map_err(|e| Error::input(format!("pose line {}: {e}", lineno + 1)))?;
        }
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let pose = Pose::new(index, r, Vector3::new(v[3], v[7], v[11]));
        pose.validate()?;
        poses.push(pose);
    }
    Ok(poses)
}

pub fn format_poses(poses: &[Pose]) -> String {
    let mut out = String::new();
    for p in poses {
        let r = &p.rotation;
        let t = &p.translation;
        out.push_str(&format!(
            "{} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e}\n",
            p.index,
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ));
    }
    out
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::data(path, "not UTF-8"))?;
    parse_poses(&text).map_err(|e| Error::data(path, e.to_string()))
}

pub fn write_poses(path: &Path, poses: &[Pose]) -> Result<()> {
    write(path, format_poses(poses).as_bytes())
}

pub fn read_range_image(path: &Path) -> Result<RangeImage> {
    let bytes = read(path)?;
    let (h, w) = header2(path, &bytes, "range image")?;
    let v: Vec<f32> = f32s(&bytes[8..]).collect();
    let (d, i) = v.chunks_exact(2).map(|c| (c[0], c[1])).unzip();
    RangeImage::from_channels(h, w, d, i).map_err(|e| Error::data(path, e.to_string()))
}

pub fn write_range_image(path: &Path, img: &RangeImage) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + img.distance().len() * 8);
    bytes.extend_from_slice(&(img.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&(img.width() as u32).to_le_bytes());
    for (d, i) in img.distance().iter().zip(img.intensity()) {
        bytes.extend_from_slice(&d.to_le_bytes());
        bytes.extend_from_slice(&i.to_le_bytes());
    }
    write(path, &bytes)
}

/// Row-major `f32` matrix with a `(rows, cols)` header.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix32 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix32 {
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

pub fn read_matrix(path: &Path) -> Result<Matrix32> {
    let bytes = read(path)?;
    let (rows, cols) = header2(path, &bytes, "matrix")?;
    Ok(Matrix32 {
        rows,
        cols,
        data: f32s(&bytes[8..]).collect(),
    })
}

pub fn write_matrix(path: &Path, m: &Matrix32) -> Result<()> {
    assert_eq!(m.data.len(), m.rows * m.cols);
    let mut bytes = Vec::with_capacity(8 + m.data.len() * 4);
    bytes.extend_from_slice(&(m.rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for v in &m.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write(path, &bytes)
}

/// Descriptor databases share the matrix layout: one descriptor per row.
pub fn read_descriptors(path: &Path) -> Result<Vec<Vec<f64>>> {
    let m = read_matrix(path)?;
    Ok((0..m.rows)
        .map(|r| m.row(r).iter().map(|&v| v as f64).collect())
        .collect())
}

pub fn write_descriptors(path: &Path, descs: &[Vec<f64>]) -> Result<()> {
    let cols = descs.first().map_or(0, |d| d.len());
    if descs.iter().any(|d| d.len() != cols) {
        return Err(Error::input("descriptors differ in length"));
    }
    let data = descs.iter().flatten().map(|&v| v as f32).collect();
    write_matrix(
        path,
        &Matrix32 {
            rows: descs.len(),
            cols,
            data,
        },
    )
}

pub fn read_flags(path: &Path) -> Result<Vec<bool>> {
    read(path)?
        .into_iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::data(path, format!("flag byte {b} is not 0 or 1"))),
        })
        .collect()
}

pub fn write_flags(path: &Path, flags: &[bool]) -> Result<()> {
    let bytes: Vec<u8> = flags.iter().map(|&f| f as u8).collect();
    write(path, &bytes)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = read(path)?;
    String::from_utf8(bytes).map_err(|_| Error::data(path, "not UTF-8"))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write(path, bytes)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    read(path)
}
