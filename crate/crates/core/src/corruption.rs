//! Parameterized synthetic weather corruption.
//!
//! Original points survive independently with probability
//! `1 - dropout_prob` and have their intensity attenuated by
//! `exp(-attenuation * range)`. A Poisson-distributed number of clutter
//! points is then scattered uniformly in a sensor-centred ball.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::range_image::{Point, PointCloud};

/// Clutter returns are low-reflectance: intensity uniform in `[0, MAX]`.
pub const SCATTER_INTENSITY_MAX: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherKind {
    Snow,
    Fog,
    Rain,
    #[default]
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionParams {
    pub kind: WeatherKind,
    /// Expected clutter points per scan.
    pub scatter_rate: f64,
    /// Meters.
    pub scatter_range_max: f64,
    pub dropout_prob: f64,
    /// Per meter.
    pub attenuation: f64,
    pub rng_seed: u64,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl CorruptionParams {
    pub fn identity() -> Self {
        Self {
            kind: WeatherKind::None,
            scatter_rate: 0.0,
            scatter_range_max: 10.0,
            dropout_prob: 0.0,
            attenuation: 0.0,
            rng_seed: 0,
        }
    }

    /// Severity presets. They are arbitrary operating points, not
    /// measurements of real weather.
    pub fn preset(kind: WeatherKind, rng_seed: u64) -> Self {
        let (scatter_rate, scatter_range_max, dropout_prob, attenuation) = match kind {
            WeatherKind::Snow => (1500.0, 12.0, 0.25, 0.01),
            WeatherKind::Fog => (600.0, 8.0, 0.35, 0.03),
            WeatherKind::Rain => (400.0, 15.0, 0.1, 0.005),
            WeatherKind::None => return Self { rng_seed, ..Self::identity() },
        };
        Self {
            kind,
            scatter_rate,
            scatter_range_max,
            dropout_prob,
            attenuation,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::config(format!("dropout_prob {} outside [0, 1]", self.dropout_prob)));
        }
        if !(self.scatter_rate >= 0.0) || !self.scatter_rate.is_finite() {
            return Err(Error::config("scatter_rate must be finite and >= 0"));
        }
        if !(self.attenuation >= 0.0) || !self.attenuation.is_finite() {
            return Err(Error::config("attenuation must be finite and >= 0"));
        }
        if !(self.scatter_range_max > 0.0) {
            return Err(Error::config("scatter_range_max must be positive"));
        }
        Ok(())
    }
}

/// Corrupted cloud plus one flag per output point marking injected clutter.
/// Surviving originals come first, in input order.
pub fn corrupt(cloud: &PointCloud, params: &CorruptionParams) -> Result<(PointCloud, Vec<bool>)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut points = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        if params.dropout_prob > 0.0 && rng.random::<f64>() < params.dropout_prob {
            continue;
        }
        let mut q = *p;
        if params.attenuation > 0.0 {
            q.intensity *= (-params.attenuation * p.range()).exp();
        }
        points.push(q);
    }
    let kept = points.len();
    let count = if params.scatter_rate > 0.0 {
        Poisson::new(params.scatter_rate)
            .map_err(|e| Error::config(format!("scatter_rate: {e}")))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    for _ in 0..count {
        points.push(sample_ball(&mut rng, params.scatter_range_max));
    }
    let mut flags = vec![false; kept];
    flags.resize(points.len(), true);
    Ok((PointCloud::new(points), flags))
}

fn sample_ball<R: Rng>(rng: &mut R, radius: f64) -> Point {
    // Rejection from the enclosing cube: exact uniformity, ~52% acceptance.
    loop {
        let x = rng.random_range(-1.0..1.0);
        let y = rng.random_range(-1.0..1.0);
        let z = rng.random_range(-1.0..1.0);
        if x * x + y * y + z * z <= 1.0 {
            let i = rng.random_range(0.0..=SCATTER_INTENSITY_MAX);
            return Point::new(radius * x, radius * y, radius * z, i);
        }
    }
}
