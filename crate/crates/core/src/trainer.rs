//! Alternating optimisation of the restoration (LDR) and recognition (LPR)
//! networks.
//!
//! Epochs are numbered from 1. Under the union strategy odd epochs train
//! LDR on `REC + lambda * LTD`, using the frozen LPR for pseudo-labels, and
//! even epochs train LPR on triplets whose queries pass through the frozen
//! LDR. The frozen module is bound as constants, so its parameters cannot
//! move; the epoch log carries hashes that prove it.

use std::cell::Cell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use autograd::optim::{AdamW, AdamWConfig};
use autograd::{Binder, Graph, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::param_hash;
use crate::error::{Error, Result};
use crate::inference::{describe, restore, stack};
use crate::ldr::LdrNet;
use crate::losses::{ldr_loss, triplet_loss};
use crate::lpr::LprNet;
use crate::pairing::Pose;
use crate::range_image::RangeImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Direct,
    Separate,
    Union,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Direct, Strategy::Separate, Strategy::Union];

    pub fn uses_ldr(self) -> bool {
        self != Strategy::Direct
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Direct => "direct",
            Strategy::Separate => "separate",
            Strategy::Union => "union",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "separate" => Ok(Strategy::Separate),
            "union" => Ok(Strategy::Union),
            other => Err(Error::config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Ldr,
    Lpr,
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_ldr: f64,
    pub lr_lpr: f64,
    pub lr_min: f64,
    pub t_max: usize,
    pub weight_decay: f64,
    pub lambda_warmup_epochs: usize,
    pub lambda_warm: f64,
    pub lambda_main: f64,
    pub tau: f64,
    pub margin: f64,
    pub negatives: usize,
    /// Training crop `[height, width]`; the full image when larger.
    pub crop: [usize; 2],
    pub flip_prob: f64,
    pub positive_radius: f64,
    pub negative_radius: f64,
    pub ldr_batch: usize,
    /// Passes over the restoration pairs per LDR epoch.
    pub ldr_passes: usize,
    /// Caps the samples visited per epoch; 0 visits all of them.
    pub max_steps_per_epoch: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr_ldr: 1e-4,
            lr_lpr: 1e-4,
            lr_min: 1e-6,
            t_max: 100,
            weight_decay: 0.01,
            lambda_warmup_epochs: 30,
            lambda_warm: 0.01,
            lambda_main: 0.1,
            tau: 1.0,
            margin: 0.5,
            negatives: 6,
            crop: [32, 480],
            flip_prob: 0.5,
            positive_radius: 5.0,
            negative_radius: 20.0,
            ldr_batch: 4,
            ldr_passes: 1,
            max_steps_per_epoch: 0,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr_ldr, self.lr_lpr, self.lr_min, self.tau, self.margin];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::config("learning rates, tau and margin must be positive"));
        }
        if self.lr_min > self.lr_ldr.min(self.lr_lpr) {
            return Err(Error::config("lr_min exceeds a maximum learning rate"));
        }
        if self.t_max == 0 || self.negatives == 0 || self.ldr_batch == 0 || self.ldr_passes == 0 {
            return Err(Error::config("t_max, negatives, ldr_batch and ldr_passes must be at least 1"));
        }
        if !(self.positive_radius > 0.0 && self.positive_radius < self.negative_radius) {
            return Err(Error::config("need 0 < positive_radius < negative_radius"));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config("flip_prob must lie in [0, 1]"));
        }
        if self.lambda_warm < 0.0 || self.lambda_main < 0.0 || !(self.weight_decay >= 0.0) {
            return Err(Error::config("lambda and weight decay must be non-negative"));
        }
        if self.crop.contains(&0) {
            return Err(Error::config("crop dimensions must be positive"));
        }
        Ok(())
    }
}

pub fn lambda_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch <= cfg.lambda_warmup_epochs {
        cfg.lambda_warm
    } else {
        cfg.lambda_main
    }
}

/// Cosine annealing from `max` at epoch 1 to `min` at epoch `t_max + 1`,
/// held at `min` afterwards.
pub fn cosine_lr(epoch: usize, max: f64, min: f64, t_max: usize) -> f64 {
    let t = epoch.saturating_sub(1);
    if t >= t_max {
        return min;
    }
    min + (max - min) * (1.0 + (PI * t as f64 / t_max as f64).cos()) / 2.0
}

/// Which module a strategy trains in `epoch` of `total`.
pub fn phase_for(strategy: Strategy, epoch: usize, total: usize) -> Phase {
    match strategy {
        Strategy::Union => {
            if epoch % 2 == 1 {
                Phase::Ldr
            } else {
                Phase::Lpr
            }
        }
        Strategy::Separate => {
            if epoch <= total / 2 {
                Phase::Ldr
            } else {
                Phase::Lpr
            }
        }
        Strategy::Direct => {
            if epoch % 2 == 0 {
                Phase::Lpr
            } else {
                Phase::Idle
            }
        }
    }
}

/// Epoch at which the lr schedule is read. Separate training gives each
/// module the schedule values the alternating strategies give it: the k-th
/// LDR epoch reads epoch `2k - 1`, the k-th LPR epoch reads epoch `2k`.
pub fn schedule_epoch(strategy: Strategy, epoch: usize, total: usize) -> usize {
    match (strategy, phase_for(strategy, epoch, total)) {
        (Strategy::Separate, Phase::Ldr) => 2 * epoch - 1,
        (Strategy::Separate, _) => 2 * (epoch - total / 2),
        _ => epoch,
    }
}

/// Deterministic named sub-seed.
pub fn sub_seed(seed: u64, name: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub pose: Pose,
    pub clean: RangeImage,
    pub degraded: RangeImage,
}

#[derive(Clone, Debug)]
pub struct TrainSet {
    pub samples: Vec<TrainSample>,
    pub max_range: f64,
}

impl TrainSet {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::input("training set is empty"))?;
        let size = (first.clean.height(), first.clean.width());
        for (i, s) in self.samples.iter().enumerate() {
            if (s.clean.height(), s.clean.width()) != size || (s.degraded.height(), s.degraded.width()) != size {
                return Err(Error::input(format!("training sample {i} has a different image size")));
            }
        }
        Ok(())
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    pub fn image_size(&self) -> (usize, usize) {
        let s = &self.samples[0].clean;
        (s.height(), s.width())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripletBatch {
    pub query: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// Picks the positive closest in descriptor space among scans within
/// `positive_radius` of the query (excluding the query itself), and
/// `negatives` seeded uniform draws from scans beyond `negative_radius`.
/// `None` when either pool is empty.
pub fn mine_triplet<R: Rng>(
    query: usize,
    poses: &[Pose],
    query_desc: &[f64],
    db_desc: &[Vec<f64>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Option<TripletBatch> {
    let q = &poses[query];
    let dist = |d: &[f64]| -> f64 { d.iter().zip(query_desc).map(|(a, b)| (a - b) * (a - b)).sum() };
    let mut positive: Option<(usize, f64)> = None;
    for (j, p) in poses.iter().enumerate() {
        if j == query || q.distance_to(p) >= cfg.positive_radius {
            continue;
        }
        let d = dist(&db_desc[j]);
        if positive.is_none_or(|(_, best)| d < best) {
            positive = Some((j, d));
        }
    }
    let (positive, _) = positive?;
    let pool: Vec<usize> = poses
        .iter()
        .enumerate()
        .filter(|(_, p)| q.distance_to(p) > cfg.negative_radius)
        .map(|(j, _)| j)
        .collect();
    if pool.is_empty() {
        return None;
    }
    let negatives = if pool.len() >= cfg.negatives {
        rand::seq::index::sample(rng, pool.len(), cfg.negatives)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    } else {
        (0..cfg.negatives).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    };
    Some(TripletBatch { query, positive, negatives })
}

thread_local! {
    static AUGMENTATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of augmentations applied on this thread so far.
pub fn augmentation_count() -> usize {
    AUGMENTATIONS.with(Cell::get)
}

/// One random crop window and flip decision applied to a whole group of
/// images, so aligned images stay aligned.
pub fn augment<R: Rng>(images: &[&RangeImage], cfg: &TrainConfig, rng: &mut R) -> Vec<RangeImage> {
    AUGMENTATIONS.with(|c| c.set(c.get() + 1));
    let (h, w) = (images[0].height(), images[0].width());
    let (ch, cw) = (cfg.crop[0].min(h), cfg.crop[1].min(w));
    let row = rng.random_range(0..=h - ch);
    let col = rng.random_range(0..=w - cw);
    let flip = rng.random::<f64>() < cfg.flip_prob;
    images
        .iter()
        .map(|img| {
            let c = if (ch, cw) == (h, w) { (*img).clone() } else { img.crop(row, col, ch, cw) };
            if flip {
                c.flipped()
            } else {
                c
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub strategy: Strategy,
    pub phase: Phase,
    pub lambda: f64,
    pub lr_ldr: f64,
    pub lr_lpr: f64,
    pub steps: usize,
    pub skipped: usize,
    pub loss: f64,
    pub loss_rec: f64,
    pub loss_ltd: f64,
    pub loss_triplet: f64,
    pub ldr_hash_before: Option<String>,
    pub ldr_hash_after: Option<String>,
    pub lpr_hash_before: String,
    pub lpr_hash_after: String,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("log serializes");
        s.push('\n');
        s
    }
}

/// Both networks; `ldr` is absent for the direct strategy.
#[derive(Clone, Debug)]
pub struct Models {
    pub ldr: Option<LdrNet>,
    pub lpr: LprNet,
}

fn finite(v: f64, what: &str, epoch: usize, step: usize, models: &Models) -> Result<()> {
    if v.is_finite() {
        return Ok(());
    }
    Err(Error::Numeric(format!(
        "{what} is {v} at epoch {epoch} step {step}; ldr hash {}, lpr hash {}",
        models.ldr.as_ref().map_or("none".into(), |l| param_hash(&l.params)),
        param_hash(&models.lpr.params)
    )))
}

fn grads_finite(g: &std::collections::BTreeMap<String, Tensor>) -> Option<&str> {
    g.iter().find(|(_, t)| !t.all_finite()).map(|(n, _)| n.as_str())
}

fn visit_order<R: Rng>(n: usize, cap: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    if cap > 0 {
        order.truncate(cap);
    }
    order
}

struct Trainer<'a> {
    set: &'a TrainSet,
    cfg: &'a TrainConfig,
    strategy: Strategy,
    opt_ldr: AdamW,
    opt_lpr: AdamW,
}

#[derive(Default)]
struct Sums {
    steps: usize,
    skipped: usize,
    loss: f64,
    rec: f64,
    ltd: f64,
    triplet: f64,
}

impl Trainer<'_> {
    fn ldr_epoch(&mut self, models: &mut Models, epoch: usize, lambda: f64, lr: f64) -> Result<Sums> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, "ldr-epoch", epoch as u64));
        let order: Vec<usize> = (0..self.cfg.ldr_passes)
            .flat_map(|_| visit_order(self.set.samples.len(), self.cfg.max_steps_per_epoch, &mut rng))
            .collect();
        let mr = self.set.max_range;
        let mut sums = Sums::default();
        for (step, batch) in order.chunks(self.cfg.ldr_batch).enumerate() {
            let mut noisy = Vec::with_capacity(batch.len());
            let mut clean = Vec::with_capacity(batch.len());
            for &i in batch {
                let s = &self.set.samples[i];
                let mut pair = augment(&[&s.degraded, &s.clean], self.cfg, &mut rng);
                clean.push(pair.pop().expect("two images"));
                noisy.push(pair.pop().expect("two images"));
            }
            let x = stack(&noisy.iter().collect::<Vec<_>>(), mr)?;
            let gt = stack(&clean.iter().collect::<Vec<_>>(), mr)?;
            let (grads, total, rec, ltd) = {
                let ldr = models.ldr.as_ref().expect("LDR present for LDR epochs");
                let g = Graph::new();
                let bl = Binder::new(&g, &ldr.params, true);
                let pred = ldr.forward(&bl, g.constant(x))?;
                let bp = Binder::new(&g, &models.lpr.params, false);
                let (desc_r, desc_c) = if lambda > 0.0 {
                    let dr = models.lpr.forward(&bp, pred)?;
                    let dc = models.lpr.forward(&bp, g.constant(gt.clone()))?.value();
                    (Some(dr), Some(dc))
                } else {
                    (None, None)
                };
                let loss = ldr_loss(pred, &gt, desc_r, desc_c.as_deref(), lambda, self.cfg.tau)?;
                let total = loss.total.item();
                finite(total, "LDR loss", epoch, step, models)?;
                (bl.gradients(&g.backward(loss.total)), total, loss.rec, loss.ltd)
            };
            if let Some(name) = grads_finite(&grads) {
                finite(f64::NAN, &format!("LDR gradient of {name}"), epoch, step, models)?;
            }
            let ldr = models.ldr.as_mut().expect("LDR present");
            self.opt_ldr.step(&mut ldr.params, &grads, lr);
            sums.steps += 1;
            sums.loss += total;
            sums.rec += rec;
            sums.ltd += ltd;
        }
        Ok(sums)
    }

    fn lpr_epoch(&mut self, models: &mut Models, epoch: usize, lr: f64) -> Result<Sums> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, "lpr-epoch", epoch as u64));
        let mr = self.set.max_range;
        let degraded: Vec<RangeImage> = self.set.samples.iter().map(|s| s.degraded.clone()).collect();
        let clean: Vec<RangeImage> = self.set.samples.iter().map(|s| s.clean.clone()).collect();
        // The LDR is frozen for the whole epoch, so restoring once is exact.
        let queries = restore(models.ldr.as_ref().filter(|_| self.strategy.uses_ldr()), &degraded, mr)?;
        let db_desc = describe(&models.lpr, &clean, mr)?;
        let q_desc = describe(&models.lpr, &queries, mr)?;
        let poses = self.set.poses();
        let order = visit_order(poses.len(), self.cfg.max_steps_per_epoch, &mut rng);
        let mut sums = Sums::default();
        for (step, &qi) in order.iter().enumerate() {
            let Some(t) = mine_triplet(qi, &poses, &q_desc[qi], &db_desc, self.cfg, &mut rng) else {
                sums.skipped += 1;
                continue;
            };
            let mut members: Vec<&RangeImage> = vec![&queries[t.query], &clean[t.positive]];
            members.extend(t.negatives.iter().map(|&j| &clean[j]));
            let aug = augment(&members, self.cfg, &mut rng);
            let x = stack(&aug.iter().collect::<Vec<_>>(), mr)?;
            let g = Graph::new();
            let b = Binder::new(&g, &models.lpr.params, true);
            let d = models.lpr.forward(&b, g.constant(x))?;
            let n = t.negatives.len();
            let loss = triplet_loss(d.slice(0, 0, 1), d.slice(0, 1, 1), d.slice(0, 2, n), self.cfg.margin)?;
            let v = loss.item();
            finite(v, "triplet loss", epoch, step, models)?;
            let grads = b.gradients(&g.backward(loss));
            if let Some(name) = grads_finite(&grads) {
                finite(f64::NAN, &format!("LPR gradient of {name}"), epoch, step, models)?;
            }
            self.opt_lpr.step(&mut models.lpr.params, &grads, lr);
            sums.steps += 1;
            sums.loss += v;
            sums.triplet += v;
        }
        Ok(sums)
    }
}

/// Runs every epoch of `strategy`, calling `on_epoch` after each one (for
/// logging and checkpoints). On error `models` holds the state at the
/// failing step.
pub fn train(
    set: &TrainSet,
    models: &mut Models,
    cfg: &TrainConfig,
    strategy: Strategy,
    mut on_epoch: impl FnMut(&EpochLog, &Models) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    set.validate()?;
    if strategy.uses_ldr() != models.ldr.is_some() {
        return Err(Error::config(format!(
            "strategy {strategy} {} an LDR network",
            if strategy.uses_ldr() { "needs" } else { "does not use" }
        )));
    }
    let adam = |_: ()| {
        AdamW::new(AdamWConfig {
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        })
    };
    let mut trainer = Trainer {
        set,
        cfg,
        strategy,
        opt_ldr: adam(()),
        opt_lpr: adam(()),
    };
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let phase = phase_for(strategy, epoch, cfg.epochs);
        let lambda = match strategy {
            Strategy::Union => lambda_schedule(epoch, cfg),
            _ => 0.0,
        };
        let at = schedule_epoch(strategy, epoch, cfg.epochs);
        let lr_ldr = cosine_lr(at, cfg.lr_ldr, cfg.lr_min, cfg.t_max);
        let lr_lpr = cosine_lr(at, cfg.lr_lpr, cfg.lr_min, cfg.t_max);
        let ldr_before = models.ldr.as_ref().map(|l| param_hash(&l.params));
        let lpr_before = param_hash(&models.lpr.params);
        let sums = match phase {
            Phase::Ldr => trainer.ldr_epoch(models, epoch, lambda, lr_ldr)?,
            Phase::Lpr => trainer.lpr_epoch(models, epoch, lr_lpr)?,
            Phase::Idle => Sums::default(),
        };
        let mean = |v: f64| if sums.steps > 0 { v / sums.steps as f64 } else { 0.0 };
        let log = EpochLog {
            epoch,
            strategy,
            phase,
            lambda: if phase == Phase::Ldr { lambda } else { 0.0 },
            lr_ldr,
            lr_lpr,
            steps: sums.steps,
            skipped: sums.skipped,
            loss: mean(sums.loss),
            loss_rec: mean(sums.rec),
            loss_ltd: mean(sums.ltd),
            loss_triplet: mean(sums.triplet),
            ldr_hash_before: ldr_before,
            ldr_hash_after: models.ldr.as_ref().map(|l| param_hash(&l.params)),
            lpr_hash_before: lpr_before,
            lpr_hash_after: param_hash(&models.lpr.params),
        };
        on_epoch(&log, models)?;
        logs.push(log);
    }
    Ok(logs)
}
