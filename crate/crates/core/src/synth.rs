//! Procedural toy city and a LiDAR raycaster for it.
//!
//! The world is a closed road loop lined with oriented box buildings and
//! vertical cylinders (poles, trunks) over a flat ground plane. Traversals
//! follow the loop with a configurable lateral offset and phase, so repeated
//! laps revisit the same places from slightly different viewpoints.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairing::Pose;
use crate::range_image::{Point, PointCloud, ProjectionConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// Loop centre-line is a superellipse with these semi-axes (meters).
    pub loop_radii: [f64; 2],
    /// Superellipse exponent; 2 is an ellipse, larger is boxier.
    pub loop_exponent: f64,
    /// Mean along-road spacing between buildings on each side (meters).
    pub building_spacing: f64,
    pub poles_per_100m: f64,
    pub sensor_height: f64,
    /// Standard deviation of the range noise (meters).
    pub range_noise: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            loop_radii: [45.0, 30.0],
            loop_exponent: 4.0,
            building_spacing: 14.0,
            poles_per_100m: 10.0,
            sensor_height: 1.73,
            range_noise: 0.02,
            seed: 0,
        }
    }
}

/// Oriented box standing on the ground.
#[derive(Clone, Copy, Debug)]
struct Block {
    center: [f64; 2],
    yaw: f64,
    half: [f64; 2],
    height: f64,
    reflectivity: f64,
}

#[derive(Clone, Copy, Debug)]
struct Pole {
    center: [f64; 2],
    radius: f64,
    height: f64,
    reflectivity: f64,
}

#[derive(Clone, Debug)]
pub struct World {
    config: WorldConfig,
    /// Dense arc-length table of the loop centre-line: (s, x, y).
    path: Vec<(f64, f64, f64)>,
    blocks: Vec<Block>,
    poles: Vec<Pole>,
}

struct Hit {
    t: f64,
    cos_incidence: f64,
    reflectivity: f64,
}

const GROUND_REFLECTIVITY: f64 = 0.3;

impl World {
    pub fn generate(config: WorldConfig) -> Result<Self> {
        if config.loop_radii.iter().any(|&r| !(r > 0.0)) || !(config.loop_exponent >= 2.0) {
            return Err(Error::config("world loop radii must be positive and exponent >= 2"));
        }
        if !(config.building_spacing > 0.0) || !(config.range_noise >= 0.0) {
            return Err(Error::config("world spacing must be positive and noise non-negative"));
        }
        let path = build_path(&config);
        let mut world = Self {
            config,
            path,
            blocks: Vec::new(),
            poles: Vec::new(),
        };
        world.populate();
        Ok(world)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn loop_length(&self) -> f64 {
        self.path.last().map_or(0.0, |p| p.0)
    }

    /// Centre-line position and heading at arc length `s` (wrapped).
    pub fn path_at(&self, s: f64) -> ([f64; 2], f64) {
        let len = self.loop_length();
        let s = s.rem_euclid(len);
        let i = self.path.partition_point(|p| p.0 <= s).clamp(1, self.path.len() - 1);
        let (s0, x0, y0) = self.path[i - 1];
        let (s1, x1, y1) = self.path[i];
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        ([x0 + t * (x1 - x0), y0 + t * (y1 - y0)], (y1 - y0).atan2(x1 - x0))
    }

    /// Poses of one lap: `count` scans `spacing` meters apart starting at
    /// arc length `phase`, shifted `lateral` meters to the left of the
    /// centre-line, with Gaussian heading jitter (degrees).
    pub fn traversal(
        &self,
        count: usize,
        spacing: f64,
        phase: f64,
        lateral: f64,
        yaw_jitter_deg: f64,
        seed: u64,
    ) -> Vec<Pose> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = Normal::new(0.0, yaw_jitter_deg.to_radians().max(0.0)).expect("finite jitter");
        (0..count)
            .map(|i| {
                let ([x, y], heading) = self.path_at(phase + i as f64 * spacing);
                let (nx, ny) = (-heading.sin(), heading.cos());
                let yaw = heading + jitter.sample(&mut rng);
                Pose::from_xy_yaw(i, x + lateral * nx, y + lateral * ny, self.config.sensor_height, yaw)
            })
            .collect()
    }

    fn populate(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let len = self.loop_length();
        for side in [-1.0, 1.0] {
            let mut s = rng.random_range(0.0..self.config.building_spacing);
            while s < len {
                let ([x, y], heading) = self.path_at(s);
                let (nx, ny) = (-heading.sin(), heading.cos());
                let along = rng.random_range(2.5..8.0);
                let depth = rng.random_range(3.0..7.0);
                let setback = rng.random_range(7.0..12.0) + depth;
                self.blocks.push(Block {
                    center: [x + side * setback * nx, y + side * setback * ny],
                    yaw: heading + rng.random_range(-0.15..0.15),
                    half: [along, depth],
                    height: rng.random_range(2.5..16.0),
                    reflectivity: rng.random_range(0.35..0.95),
                });
                s += rng.random_range(0.5..1.5) * self.config.building_spacing + 2.0 * along;
            }
        }
        let poles = (len / 100.0 * self.config.poles_per_100m).round() as usize;
        for _ in 0..poles {
            let s = rng.random_range(0.0..len);
            let ([x, y], heading) = self.path_at(s);
            let (nx, ny) = (-heading.sin(), heading.cos());
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let off = side * rng.random_range(3.5..6.0);
            self.poles.push(Pole {
                center: [x + off * nx, y + off * ny],
                radius: rng.random_range(0.15..0.9),
                height: rng.random_range(3.0..9.0),
                reflectivity: rng.random_range(0.5..1.0),
            });
        }
    }

    /// Simulated scan from `pose`, in the sensor frame, one return per
    /// pixel-centre beam of `proj`. Range noise is seeded by `noise_seed`.
    pub fn scan(&self, pose: &Pose, proj: &ProjectionConfig, noise_seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = Normal::new(0.0, self.config.range_noise).expect("finite noise");
        let origin = [pose.translation.x, pose.translation.y, pose.translation.z];
        let reach = proj.max_range + 1.0;
        let blocks: Vec<&Block> = self
            .blocks
            .iter()
            .filter(|b| dist2(b.center, origin) < reach + b.half[0].hypot(b.half[1]))
            .collect();
        let poles: Vec<&Pole> = self
            .poles
            .iter()
            .filter(|p| dist2(p.center, origin) < reach + p.radius)
            .collect();
        let mut points = Vec::with_capacity(proj.height * proj.width);
        for row in 0..proj.height {
            for col in 0..proj.width {
                let local = proj.pixel_ray(row, col);
                let v = pose.rotation * nalgebra::Vector3::from(local);
                let dir = [v.x, v.y, v.z];
                let mut best: Option<Hit> = None;
                let mut consider = |h: Option<Hit>| {
                    if let Some(h) = h {
                        if best.as_ref().is_none_or(|b| h.t < b.t) {
                            best = Some(h);
                        }
                    }
                };
                if dir[2] < 0.0 {
                    consider(Some(Hit {
                        t: -origin[2] / dir[2],
                        cos_incidence: -dir[2],
                        reflectivity: GROUND_REFLECTIVITY,
                    }));
                }
                for b in &blocks {
                    consider(hit_block(b, origin, dir));
                }
                for p in &poles {
                    consider(hit_pole(p, origin, dir));
                }
                let Some(hit) = best else { continue };
                let r = hit.t + noise.sample(&mut rng);
                if !(r > 0.0) || r > proj.max_range {
                    continue;
                }
                let intensity = (hit.reflectivity * (0.4 + 0.6 * hit.cos_incidence)).clamp(0.0, 1.0);
                points.push(Point::new(r * local[0], r * local[1], r * local[2], intensity));
            }
        }
        PointCloud::new(points)
    }
}

fn dist2(c: [f64; 2], o: [f64; 3]) -> f64 {
    (c[0] - o[0]).hypot(c[1] - o[1])
}

fn build_path(cfg: &WorldConfig) -> Vec<(f64, f64, f64)> {
    let n = 4096;
    let [a, b] = cfg.loop_radii;
    let e = 2.0 / cfg.loop_exponent;
    let pt = |k: usize| {
        let th = TAU * k as f64 / n as f64;
        let (s, c) = th.sin_cos();
        (a * c.signum() * c.abs().powf(e), b * s.signum() * s.abs().powf(e))
    };
    let mut out = Vec::with_capacity(n + 1);
    let mut s = 0.0;
    let mut prev = pt(0);
    out.push((0.0, prev.0, prev.1));
    for k in 1..=n {
        let p = pt(k % n);
        s += (p.0 - prev.0).hypot(p.1 - prev.1);
        out.push((s, p.0, p.1));
        prev = p;
    }
    out
}

fn hit_block(b: &Block, o: [f64; 3], d: [f64; 3]) -> Option<Hit> {
    let (s, c) = (-b.yaw).sin_cos();
    let (ox, oy) = (o[0] - b.center[0], o[1] - b.center[1]);
    let lo = [c * ox - s * oy, s * ox + c * oy, o[2]];
    let ld = [c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]];
    let lower = [-b.half[0], -b.half[1], 0.0];
    let upper = [b.half[0], b.half[1], b.height];
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    let mut axis = 0;
    for k in 0..3 {
        if ld[k].abs() < 1e-12 {
            if lo[k] < lower[k] || lo[k] > upper[k] {
                return None;
            }
            continue;
        }
        let (mut a, mut bb) = ((lower[k] - lo[k]) / ld[k], (upper[k] - lo[k]) / ld[k]);
        if a > bb {
            std::mem::swap(&mut a, &mut bb);
        }
        if a > t0 {
            t0 = a;
            axis = k;
        }
        t1 = t1.min(bb);
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 1e-6).then(|| Hit {
        t: t0,
        cos_incidence: ld[axis].abs(),
        reflectivity: b.reflectivity,
    })
}

fn hit_pole(p: &Pole, o: [f64; 3], d: [f64; 3]) -> Option<Hit> {
    let (ox, oy) = (o[0] - p.center[0], o[1] - p.center[1]);
    let a = d[0] * d[0] + d[1] * d[1];
    if a < 1e-12 {
        return None;
    }
    let bq = 2.0 * (ox * d[0] + oy * d[1]);
    let cq = ox * ox + oy * oy - p.radius * p.radius;
    let disc = bq * bq - 4.0 * a * cq;
    if disc < 0.0 {
        return None;
    }
    let t = (-bq - disc.sqrt()) / (2.0 * a);
    if t <= 1e-6 {
        return None;
    }
    let z = o[2] + t * d[2];
    if !(0.0..=p.height).contains(&z) {
        return None;
    }
    let (hx, hy) = (ox + t * d[0], oy + t * d[1]);
    let cos = ((hx * d[0] + hy * d[1]) / (p.radius * a.sqrt())).abs();
    Some(Hit {
        t,
        cos_incidence: cos.min(1.0),
        reflectivity: p.reflectivity,
    })
}

/// Angle in `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::range_image::project;

    fn proj() -> ProjectionConfig {
        ProjectionConfig {
            height: 16,
            width: 128,
            fov_up: 3.0,
            fov_down: -25.0,
            max_range: 50.0,
        }
    }

    #[test]
    fn ground_only_world_hits_plane() {
        let world = World {
            config: WorldConfig { range_noise: 0.0, ..WorldConfig::default() },
            path: build_path(&WorldConfig::default()),
            blocks: Vec::new(),
            poles: Vec::new(),
        };
        let pose = Pose::from_xy_yaw(0, 0.0, 0.0, 1.73, 0.3);
        let cloud = world.scan(&pose, &proj(), 0);
        assert!(!cloud.is_empty());
        for p in &cloud.points {
            assert!((p.z + 1.73).abs() < 1e-9, "point not on the ground: {p:?}");
        }
    }

    #[test]
    fn block_and_pole_intersections() {
        let b = Block { center: [10.0, 0.0], yaw: 0.0, half: [1.0, 2.0], height: 5.0, reflectivity: 0.5 };
        let h = hit_block(&b, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        assert!((h.t - 9.0).abs() < 1e-12 && (h.cos_incidence - 1.0).abs() < 1e-12);
        assert!(hit_block(&b, [0.0, 0.0, 6.0], [1.0, 0.0, 0.0]).is_none());
        let p = Pole { center: [0.0, 5.0], radius: 0.5, height: 4.0, reflectivity: 0.7 };
        let h = hit_pole(&p, [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]).unwrap();
        assert!((h.t - 4.5).abs() < 1e-12);
        assert!(hit_pole(&p, [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]).is_none());
    }

    #[test]
    fn traversal_is_deterministic_and_spaced() {
        let world = World::generate(WorldConfig::default()).unwrap();
        let a = world.traversal(20, 2.0, 0.0, 0.0, 1.0, 5);
        let b = world.traversal(20, 2.0, 0.0, 0.0, 1.0, 5);
        assert_eq!(a, b);
        for w in a.windows(2) {
            let d = w[0].distance_to(&w[1]);
            assert!((d - 2.0).abs() < 0.1, "spacing {d}");
        }
        for p in &a {
            p.validate().unwrap();
        }
    }

    #[test]
    fn nearby_places_look_alike() {
        let world = World::generate(WorldConfig::default()).unwrap();
        let cfg = proj();
        let lap1 = world.traversal(1, 1.0, 40.0, 0.0, 0.0, 1);
        let lap2 = world.traversal(1, 1.0, 41.0, 1.0, 0.0, 2);
        let far = world.traversal(1, 1.0, 120.0, 0.0, 0.0, 3);
        let img = |p: &Pose| project(&world.scan(p, &cfg, 0), &cfg).unwrap();
        let diff = |a: &crate::range_image::RangeImage, b: &crate::range_image::RangeImage| {
            a.distance().iter().zip(b.distance()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>()
        };
        let (a, b, c) = (img(&lap1[0]), img(&lap2[0]), img(&far[0]));
        assert!(a.valid_count() > cfg.height * cfg.width / 2);
        assert!(diff(&a, &b) < diff(&a, &c));
    }

    #[test]
    fn wraps_angles() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-12);
    }
}
