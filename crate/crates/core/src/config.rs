//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corruption::{CorruptionParams, WeatherKind};
use crate::error::{Error, Result};
use crate::evaluation::LoopCriterion;
use crate::ldr::LdrConfig;
use crate::lpr::{BandWindows, LprConfig};
use crate::pairing::PairingConfig;
use crate::range_image::ProjectionConfig;
use crate::synth::WorldConfig;
use crate::trainer::{Strategy, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Generated in memory from `[toy]`.
    Toy,
    /// Read from `data.root` (clean) and `data.degraded_root`.
    Files,
}

/// On-disk layout: `<root>/<split>/poses.txt` and
/// `<root>/<split>/scans/NNNNNN.bin` for the splits `train`, `database` and
/// `query`. The degraded root mirrors it and adds `flags/`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub root: PathBuf,
    pub degraded_root: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Toy,
            root: PathBuf::from("data/clean"),
            degraded_root: PathBuf::from("data/degraded"),
        }
    }
}

pub const SPLITS: [&str; 3] = ["train", "database", "query"];

/// Laps through the toy world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub world: WorldConfig,
    pub train_scans: usize,
    pub database_scans: usize,
    pub query_scans: usize,
    pub train_spacing: f64,
    /// Lateral offsets of the train, database and query laps (meters).
    pub lateral: [f64; 3],
    pub yaw_jitter_deg: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            train_scans: 120,
            database_scans: 100,
            query_scans: 100,
            train_spacing: 2.0,
            lateral: [-1.0, 1.0, 0.0],
            yaw_jitter_deg: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub strategy: Strategy,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub toy: ToyConfig,
    pub projection: ProjectionConfig,
    pub corruption: CorruptionParams,
    pub pairing: PairingConfig,
    pub ldr: LdrConfig,
    pub lpr: LprConfig,
    pub train: TrainConfig,
    #[serde(rename = "loop")]
    pub loop_criterion: LoopCriterion,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strategy: Strategy::Union,
            output_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            toy: ToyConfig::default(),
            projection: ProjectionConfig::default(),
            corruption: CorruptionParams::preset(WeatherKind::Snow, 0),
            pairing: PairingConfig::default(),
            ldr: LdrConfig::default(),
            lpr: LprConfig::default(),
            train: TrainConfig::default(),
            loop_criterion: LoopCriterion::default(),
        }
    }
}

impl ExperimentConfig {
    /// Small CPU-sized setup on the procedural world.
    pub fn toy() -> Self {
        Self {
            output_dir: PathBuf::from("runs/toy"),
            projection: ProjectionConfig {
                height: 16,
                width: 128,
                fov_up: 3.0,
                fov_down: -25.0,
                max_range: 50.0,
            },
            ldr: LdrConfig {
                base_channels: 4,
                sag_scales: vec![1, 2],
                ..LdrConfig::default()
            },
            lpr: LprConfig {
                channels: 8,
                heads: 2,
                descriptor_dim: 64,
                clusters: 8,
                windows: BandWindows {
                    ll: [2, 8],
                    lh: [1, 16],
                    hl: [4, 4],
                    hh: [2, 8],
                },
                ..LprConfig::default()
            },
            train: TrainConfig {
                epochs: 20,
                lr_ldr: 3e-3,
                lr_lpr: 1e-3,
                lr_min: 1e-5,
                t_max: 20,
                lambda_warmup_epochs: 6,
                tau: 0.3,
                crop: [16, 128],
                ldr_batch: 1,
                ldr_passes: 4,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        self.corruption.validate()?;
        self.ldr.validate()?;
        self.lpr.validate()?;
        self.train.validate()?;
        self.loop_criterion.validate()?;
        if self.toy.train_scans == 0 || self.toy.database_scans == 0 || self.toy.query_scans == 0 {
            return Err(Error::config("toy splits need at least one scan each"));
        }
        Ok(())
    }

    /// Checks that the dataset directories exist.
    pub fn check_paths(&self) -> Result<()> {
        if self.data.source == DataSource::Files {
            for root in [&self.data.root, &self.data.degraded_root] {
                for split in SPLITS {
                    let dir = root.join(split);
                    if !dir.is_dir() {
                        return Err(Error::data(&dir, "dataset split directory is missing"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        for cfg in [ExperimentConfig::default(), ExperimentConfig::toy()] {
            let text = cfg.to_toml();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn partial_files_use_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\nstrategy = \"direct\"\n[train]\nepochs = 4\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.strategy, Strategy::Direct);
        assert_eq!(cfg.train.epochs, 4);
        assert_eq!(cfg.train.margin, TrainConfig::default().margin);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let bad = [
            "strategy = \"both\"",
            "[train]\npositive_radius = 30.0",
            "[corruption]\ndropout_prob = 2.0",
            "unknown_key = 1",
            "[loop]\nthreshold = 0.0",
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn missing_dataset_is_a_data_error() {
        let mut cfg = ExperimentConfig::default();
        cfg.data.source = DataSource::Files;
        cfg.data.root = PathBuf::from("/nonexistent/rangeloc");
        assert!(matches!(cfg.check_paths(), Err(Error::Data { .. })));
    }
}
