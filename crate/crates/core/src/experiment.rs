//! End-to-end pipeline: dataset assembly, training of one strategy and
//! evaluation against the clean database.

use std::path::{Path, PathBuf};

use crate::config::{DataSource, ExperimentConfig, SPLITS};
use crate::corruption::corrupt;
use crate::error::{Error, Result};
use crate::evaluation::{self, Metrics, RetrievalResult, RECALL_CURVE_MAX};
use crate::inference::{describe, restore};
use crate::io;
use crate::ldr::LdrNet;
use crate::lpr::LprNet;
use crate::pairing::Pose;
use crate::range_image::{project, PointCloud, RangeImage};
use crate::synth::World;
use crate::trainer::{self, sub_seed, EpochLog, Models, Strategy, TrainSample, TrainSet};

/// Poses and clean point clouds of one split.
#[derive(Clone, Debug)]
pub struct RawSplit {
    pub name: String,
    pub poses: Vec<Pose>,
    pub clouds: Vec<PointCloud>,
}

#[derive(Clone, Debug)]
pub struct Split {
    pub poses: Vec<Pose>,
    pub clean: Vec<RangeImage>,
    pub degraded: Vec<RangeImage>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Split,
    pub database: Split,
    pub query: Split,
    pub max_range: f64,
}

impl Dataset {
    pub fn train_set(&self) -> TrainSet {
        let s = &self.train;
        TrainSet {
            samples: s
                .poses
                .iter()
                .zip(&s.clean)
                .zip(&s.degraded)
                .map(|((p, c), d)| TrainSample { pose: *p, clean: c.clone(), degraded: d.clone() })
                .collect(),
            max_range: self.max_range,
        }
    }

    pub fn len(&self) -> usize {
        self.train.poses.len() + self.database.poses.len() + self.query.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Simulated clean scans of the three toy laps.
pub fn toy_splits(cfg: &ExperimentConfig) -> Result<Vec<RawSplit>> {
    let toy = &cfg.toy;
    let world = World::generate(toy.world.clone())?;
    let len = world.loop_length();
    let db_spacing = len / toy.database_scans as f64;
    let q_spacing = len / toy.query_scans as f64;
    let laps = [
        (toy.train_scans, toy.train_spacing, 0.0),
        (toy.database_scans, db_spacing, 0.3 * db_spacing),
        (toy.query_scans, q_spacing, 0.8 * q_spacing),
    ];
    let seed = toy.world.seed;
    Ok(SPLITS
        .iter()
        .zip(laps)
        .enumerate()
        .map(|(k, (name, (count, spacing, phase)))| {
            let poses = world.traversal(
                count,
                spacing,
                phase,
                toy.lateral[k],
                toy.yaw_jitter_deg,
                sub_seed(seed, name, 0),
            );
            let clouds = poses
                .iter()
                .enumerate()
                .map(|(i, p)| world.scan(p, &cfg.projection, sub_seed(seed, name, 1 + i as u64)))
                .collect();
            RawSplit { name: name.to_string(), poses, clouds }
        })
        .collect())
}

/// Per-scan corruption seed, derived from the configured base seed.
pub fn corruption_seed(base: u64, split: &str, index: usize) -> u64 {
    sub_seed(base, split, index as u64)
}

pub fn corrupt_split(cfg: &ExperimentConfig, split: &RawSplit) -> Result<Vec<(PointCloud, Vec<bool>)>> {
    split
        .clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut p = cfg.corruption;
            p.rng_seed = corruption_seed(cfg.corruption.rng_seed, &split.name, i);
            corrupt(c, &p)
        })
        .collect()
}

pub fn scan_path(root: &Path, split: &str, index: usize) -> PathBuf {
    root.join(split).join("scans").join(format!("{index:06}.bin"))
}

pub fn flags_path(root: &Path, split: &str, index: usize) -> PathBuf {
    root.join(split).join("flags").join(format!("{index:06}.flags"))
}

pub fn poses_path(root: &Path, split: &str) -> PathBuf {
    root.join(split).join("poses.txt")
}

pub fn write_split(root: &Path, split: &RawSplit) -> Result<()> {
    io::write_poses(&poses_path(root, &split.name), &split.poses)?;
    for (i, c) in split.clouds.iter().enumerate() {
        io::write_point_cloud(&scan_path(root, &split.name, i), c)?;
    }
    Ok(())
}

/// Reads a split whose scans are numbered consecutively from zero.
pub fn read_split(root: &Path, name: &str) -> Result<RawSplit> {
    let poses = io::read_poses(&poses_path(root, name))?;
    let clouds = (0..poses.len())
        .map(|i| io::read_point_cloud(&scan_path(root, name, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RawSplit { name: name.to_string(), poses, clouds })
}

fn project_all(clouds: &[PointCloud], cfg: &ExperimentConfig) -> Result<Vec<RangeImage>> {
    clouds.iter().map(|c| project(c, &cfg.projection)).collect()
}

/// Clean and degraded range images for every split.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    cfg.check_paths()?;
    let mut splits = Vec::with_capacity(3);
    match cfg.data.source {
        DataSource::Toy => {
            for raw in toy_splits(cfg)? {
                let degraded: Vec<PointCloud> = corrupt_split(cfg, &raw)?.into_iter().map(|(c, _)| c).collect();
                splits.push(Split {
                    clean: project_all(&raw.clouds, cfg)?,
                    degraded: project_all(&degraded, cfg)?,
                    poses: raw.poses,
                });
            }
        }
        DataSource::Files => {
            for name in SPLITS {
                let clean = read_split(&cfg.data.root, name)?;
                let degraded = read_split(&cfg.data.degraded_root, name)?;
                if degraded.poses.len() != clean.poses.len() {
                    return Err(Error::data(
                        poses_path(&cfg.data.degraded_root, name),
                        "degraded split does not match the clean split",
                    ));
                }
                splits.push(Split {
                    clean: project_all(&clean.clouds, cfg)?,
                    degraded: project_all(&degraded.clouds, cfg)?,
                    poses: clean.poses,
                });
            }
        }
    }
    let query = splits.pop().expect("three splits");
    let database = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(Dataset { train, database, query, max_range: cfg.projection.max_range })
}

/// Freshly initialised networks for `strategy`, seeded from `seed`.
pub fn init_models(cfg: &ExperimentConfig, strategy: Strategy, seed: u64) -> Result<Models> {
    let ldr = if strategy.uses_ldr() {
        Some(LdrNet::new(cfg.ldr.clone(), sub_seed(seed, "ldr-init", 0))?)
    } else {
        None
    };
    let lpr = LprNet::new(cfg.lpr.clone(), sub_seed(seed, "lpr-init", 0))?;
    Ok(Models { ldr, lpr })
}

pub fn train_strategy(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    strategy: Strategy,
    seed: u64,
    on_epoch: impl FnMut(&EpochLog, &Models) -> Result<()>,
) -> Result<(Models, Vec<EpochLog>)> {
    let mut models = init_models(cfg, strategy, seed)?;
    let tcfg = trainer::TrainConfig { seed: sub_seed(seed, "train", 0), ..cfg.train.clone() };
    let logs = trainer::train(&ds.train_set(), &mut models, &tcfg, strategy, on_epoch)?;
    Ok((models, logs))
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub curve: Vec<(usize, f64)>,
    /// FSS of restored queries (rows) against their clean counterparts.
    pub similarity: Vec<Vec<f64>>,
    pub results: Vec<RetrievalResult>,
}

/// Database descriptors from clean scans, query descriptors from restored
/// degraded scans.
pub fn evaluate(ds: &Dataset, models: &Models, cfg: &ExperimentConfig) -> Result<Evaluation> {
    let mr = ds.max_range;
    let restored = restore(models.ldr.as_ref(), &ds.query.degraded, mr)?;
    let db_desc = describe(&models.lpr, &ds.database.clean, mr)?;
    let q_desc = describe(&models.lpr, &restored, mr)?;
    let q_clean_desc = describe(&models.lpr, &ds.query.clean, mr)?;
    let (mut metrics, results, gt) = evaluation::retrieval_metrics(
        &q_desc,
        &db_desc,
        &ds.query.poses,
        &ds.database.poses,
        &cfg.loop_criterion,
    )?;
    let n = restored.len() as f64;
    let mut ssim = 0.0;
    let mut ssim_i = 0.0;
    for (r, c) in restored.iter().zip(&ds.query.clean) {
        ssim += evaluation::ssim(r, c, mr)?;
        ssim_i += evaluation::ssim_intensity(r, c)?;
    }
    let fss: f64 = q_desc.iter().zip(&q_clean_desc).map(|(a, b)| evaluation::fss(a, b)).sum();
    metrics.ssim_mean = Some(ssim / n);
    metrics.fss_mean = Some(fss / n);
    metrics.meta.ssim_intensity_mean = Some(ssim_i / n);
    Ok(Evaluation {
        curve: evaluation::recall_curve(&results, &gt, RECALL_CURVE_MAX)?,
        similarity: evaluation::similarity_matrix(&q_desc, &q_clean_desc),
        metrics,
        results,
    })
}

/// Mean diagonal and mean off-diagonal entries of a square matrix.
pub fn diagonal_contrast(m: &[Vec<f64>]) -> (f64, f64) {
    let n = m.len();
    let mut diag = 0.0;
    let mut off = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i == j {
                diag += v;
            } else {
                off += v;
            }
        }
    }
    (diag / n as f64, off / (n * n - n).max(1) as f64)
}
