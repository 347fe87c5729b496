//! Subcommands of the `rangeloc` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rangeloc::checkpoint::{load_ldr, load_lpr, save_ldr, save_lpr};
use rangeloc::config::{ExperimentConfig, SPLITS};
use rangeloc::evaluation::{self, recall_csv, to_matrix32};
use rangeloc::experiment::{self, corrupt_split, flags_path, poses_path, read_split, scan_path, toy_splits};
use rangeloc::inference::{describe, restore};
use rangeloc::io;
use rangeloc::pairing::find_aligned_pairs;
use rangeloc::plot;
use rangeloc::range_image::{project, RangeImage};
use rangeloc::trainer::Strategy;
use rangeloc::{Error, Result};

pub const LDR_CKPT: &str = "ldr.ckpt";
pub const LPR_CKPT: &str = "lpr.ckpt";

#[derive(Debug, Parser)]
#[command(name = "rangeloc", version, about = "LiDAR restoration and place recognition on range images")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment file (TOML). Without it the built-in toy preset is used.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Checkpoint file, or a training output directory holding ldr.ckpt / lpr.ckpt.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    /// Overrides the experiment seed (the corruption seed for `corrupt`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the clean toy splits (scans and poses) to disk.
    Synth,
    /// Corrupt every split under the clean root; writes scans, noise flags and a manifest.
    Corrupt {
        /// Clean dataset root; defaults to `data.root`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Match two pose files; prints `idx_a idx_b` per line.
    Pair {
        #[arg(long)]
        poses_a: PathBuf,
        #[arg(long)]
        poses_b: PathBuf,
    },
    /// Train one strategy; writes a JSON-lines log and checkpoints.
    Train,
    /// Restore a directory of scans with the LDR network.
    Restore {
        #[arg(long)]
        input: PathBuf,
    },
    /// Compute global descriptors for a directory of scans or range images.
    Describe {
        #[arg(long)]
        input: PathBuf,
    },
    /// Rank a database descriptor file for each query descriptor.
    Retrieve {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        database: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Evaluate trained checkpoints on the query and database splits.
    Eval,
    /// Render recall curves and a similarity matrix to PNG.
    Plot {
        /// Recall CSV files, one curve each.
        #[arg(long)]
        curve: Vec<PathBuf>,
        /// Similarity matrix file written by `eval`.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Input(_) | Error::Data { .. } | Error::Io { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::toy(),
    };
    if let Some(s) = common.strategy {
        cfg.strategy = s;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn require<'a>(opt: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    opt.as_deref().ok_or_else(|| Error::config(format!("--{flag} is required for this command")))
}

/// A checkpoint file, or `name` inside a checkpoint directory.
fn checkpoint_file(common: &Common, name: &str) -> Result<PathBuf> {
    let p = require(&common.checkpoint, "checkpoint")?;
    Ok(if p.is_dir() { p.join(name) } else { p.to_path_buf() })
}

pub fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let cfg = load_config(common)?;
    match &cli.command {
        Command::Synth => cmd_synth(&cfg, common),
        Command::Corrupt { input } => cmd_corrupt(cfg, common, input.as_deref()),
        Command::Pair { poses_a, poses_b } => cmd_pair(&cfg, common, poses_a, poses_b),
        Command::Train => cmd_train(&cfg, common),
        Command::Restore { input } => cmd_restore(&cfg, common, input),
        Command::Describe { input } => cmd_describe(&cfg, common, input),
        Command::Retrieve { queries, database, k } => cmd_retrieve(&cfg, common, queries, database, *k),
        Command::Eval => cmd_eval(&cfg, common),
        Command::Plot { curve, matrix } => cmd_plot(common, curve, matrix.as_deref()),
    }
}

fn cmd_synth(cfg: &ExperimentConfig, common: &Common) -> Result<()> {
    let root = common.out.clone().unwrap_or_else(|| cfg.data.root.clone());
    for split in toy_splits(cfg)? {
        experiment::write_split(&root, &split)?;
    }
    Ok(())
}

fn cmd_corrupt(mut cfg: ExperimentConfig, common: &Common, input: Option<&Path>) -> Result<()> {
    if let Some(seed) = common.seed {
        cfg.corruption.rng_seed = seed;
    }
    let src = input.map_or_else(|| cfg.data.root.clone(), Path::to_path_buf);
    let dst = common.out.clone().unwrap_or_else(|| cfg.data.degraded_root.clone());
    let mut manifest = String::new();
    for name in SPLITS {
        if !src.join(name).is_dir() {
            return Err(Error::data(src.join(name), "dataset split directory is missing"));
        }
        let split = read_split(&src, name)?;
        io::write_poses(&poses_path(&dst, name), &split.poses)?;
        for (i, (cloud, flags)) in corrupt_split(&cfg, &split)?.into_iter().enumerate() {
            let out = scan_path(&dst, name, i);
            io::write_point_cloud(&out, &cloud)?;
            io::write_flags(&flags_path(&dst, name, i), &flags)?;
            manifest.push_str(&format!("{} {}\n", scan_path(&src, name, i).display(), out.display()));
        }
    }
    io::write_text(&dst.join("manifest.txt"), &manifest)
}

fn cmd_pair(cfg: &ExperimentConfig, common: &Common, a: &Path, b: &Path) -> Result<()> {
    let pairs = find_aligned_pairs(
        &io::read_poses(a)?,
        &io::read_poses(b)?,
        cfg.pairing.dist_thresh,
        cfg.pairing.ang_thresh,
    )?;
    let text: String = pairs.iter().map(|(i, j)| format!("{i} {j}\n")).collect();
    match &common.out {
        Some(p) => io::write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_train(cfg: &ExperimentConfig, common: &Common) -> Result<()> {
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    io::write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let ds = experiment::build_dataset(cfg)?;
    let log_path = out.join("train_log.jsonl");
    let mut log = String::new();
    let every = cfg.train.checkpoint_every;
    let result = experiment::train_strategy(&ds, cfg, cfg.strategy, cfg.seed, |entry, models| {
        log.push_str(&entry.to_json_line());
        io::write_text(&log_path, &log)?;
        if every > 0 && entry.epoch % every == 0 {
            let dir = out.join("checkpoints");
            if let Some(ldr) = &models.ldr {
                save_ldr(&dir.join(format!("epoch_{:03}_{LDR_CKPT}", entry.epoch)), ldr)?;
            }
            save_lpr(&dir.join(format!("epoch_{:03}_{LPR_CKPT}", entry.epoch)), &models.lpr)?;
        }
        Ok(())
    });
    let (models, _) = match result {
        Ok(r) => r,
        Err(e) => {
            if matches!(e, Error::Numeric(_)) {
                io::write_text(&out.join("failure.txt"), &format!("{e}\n"))?;
            }
            return Err(e);
        }
    };
    if let Some(ldr) = &models.ldr {
        save_ldr(&out.join(LDR_CKPT), ldr)?;
    }
    save_lpr(&out.join(LPR_CKPT), &models.lpr)
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Range images for a directory of `.bin` scans or `.rimg` images.
fn load_images(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<PathBuf>, Vec<RangeImage>)> {
    let scans = files_with_ext(dir, "bin")?;
    let (paths, images) = if scans.is_empty() {
        let paths = files_with_ext(dir, "rimg")?;
        let images = paths.iter().map(|p| io::read_range_image(p)).collect::<Result<Vec<_>>>()?;
        (paths, images)
    } else {
        let images = scans
            .iter()
            .map(|p| project(&io::read_point_cloud(p)?, &cfg.projection))
            .collect::<Result<Vec<_>>>()?;
        (scans, images)
    };
    if images.is_empty() {
        return Err(Error::data(dir, "no .bin or .rimg files found"));
    }
    Ok((paths, images))
}

fn cmd_restore(cfg: &ExperimentConfig, common: &Common, input: &Path) -> Result<()> {
    let ldr = load_ldr(&checkpoint_file(common, LDR_CKPT)?)?;
    let out = require(&common.out, "out")?;
    let (paths, images) = load_images(cfg, input)?;
    let restored = restore(Some(&ldr), &images, cfg.projection.max_range)?;
    for (p, img) in paths.iter().zip(&restored) {
        let stem = p.file_stem().unwrap_or_default();
        io::write_range_image(&out.join(stem).with_extension("rimg"), img)?;
    }
    Ok(())
}

fn cmd_describe(cfg: &ExperimentConfig, common: &Common, input: &Path) -> Result<()> {
    let lpr = load_lpr(&checkpoint_file(common, LPR_CKPT)?)?;
    let out = require(&common.out, "out")?;
    let (_, images) = load_images(cfg, input)?;
    io::write_descriptors(out, &describe(&lpr, &images, cfg.projection.max_range)?)
}

fn cmd_retrieve(cfg: &ExperimentConfig, common: &Common, queries: &Path, database: &Path, k: usize) -> Result<()> {
    let q = io::read_descriptors(queries)?;
    let db = io::read_descriptors(database)?;
    let mut text = String::from("query rank db score\n");
    for (i, d) in q.iter().enumerate() {
        let r = evaluation::retrieve(d, &db, k, &cfg.loop_criterion.exclusions(i, db.len()))?;
        for (rank, (j, s)) in r.ranked.iter().zip(&r.scores).enumerate() {
            text.push_str(&format!("{i} {} {j} {s:.6}\n", rank + 1));
        }
    }
    match &common.out {
        Some(p) => io::write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_eval(cfg: &ExperimentConfig, common: &Common) -> Result<()> {
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.join("eval"));
    let lpr = load_lpr(&checkpoint_file(common, LPR_CKPT)?)?;
    let ldr = if cfg.strategy.uses_ldr() {
        Some(load_ldr(&checkpoint_file(common, LDR_CKPT)?)?)
    } else {
        None
    };
    let ds = experiment::build_dataset(cfg)?;
    let models = rangeloc::trainer::Models { ldr, lpr };
    let ev = experiment::evaluate(&ds, &models, cfg)?;
    io::write_text(&out.join("metrics.json"), &ev.metrics.to_json())?;
    io::write_text(&out.join("recall.csv"), &recall_csv(&ev.curve))?;
    io::write_matrix(&out.join("similarity.f32"), &to_matrix32(&ev.similarity))
}

fn cmd_plot(common: &Common, curves: &[PathBuf], matrix: Option<&Path>) -> Result<()> {
    let out = require(&common.out, "out")?;
    if curves.is_empty() && matrix.is_none() {
        return Err(Error::config("plot needs --curve and/or --matrix"));
    }
    if !curves.is_empty() {
        let series = curves
            .iter()
            .map(|p| evaluation::parse_recall_csv(&io::read_text(p)?).map_err(|e| relabel(p, e)))
            .collect::<Result<Vec<_>>>()?;
        plot::save_png(&plot::recall_curves(&series)?, &out.join("recall.png"))?;
    }
    if let Some(p) = matrix {
        let m = io::read_matrix(p)?;
        let rows: Vec<Vec<f64>> = (0..m.rows).map(|r| m.row(r).iter().map(|&v| f64::from(v)).collect()).collect();
        plot::save_png(&plot::matrix_heatmap(&rows, 4)?, &out.join("similarity.png"))?;
    }
    Ok(())
}

fn relabel(path: &Path, e: Error) -> Error {
    match e {
        Error::Input(msg) => Error::data(path, msg),
        other => other,
    }
}
