//! Retrieval harness and metrics: recall@N, max-F1, loop ground truth,
//! SSIM over the distance channel, FSS and similarity matrices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Matrix32;
use crate::pairing::Pose;
use crate::range_image::RangeImage;

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    pub query_idx: usize,
    /// Database indices, most similar first.
    pub ranked: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopCriterion {
    pub threshold: f64,
    pub exclusion_window: usize,
    /// Queries and database come from the same sequence; enables the index
    /// exclusion window.
    pub same_sequence: bool,
}

impl Default for LoopCriterion {
    fn default() -> Self {
        Self {
            threshold: 5.0,
            exclusion_window: 50,
            same_sequence: false,
        }
    }
}

impl LoopCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::config("loop threshold must be positive"));
        }
        Ok(())
    }

    /// Whether database index `idx_db` is hidden from query `idx_q`.
    pub fn excluded(&self, idx_q: usize, idx_db: usize) -> bool {
        self.same_sequence && idx_db <= idx_q && idx_q - idx_db < self.exclusion_window
    }

    pub fn exclusions(&self, idx_q: usize, db_len: usize) -> Vec<usize> {
        (0..db_len).filter(|&j| self.excluded(idx_q, j)).collect()
    }
}

pub fn is_true_loop(pose_q: &Pose, pose_db: &Pose, crit: &LoopCriterion, idx_q: usize, idx_db: usize) -> bool {
    pose_q.distance_to(pose_db) < crit.threshold && !crit.excluded(idx_q, idx_db)
}

/// True-loop database indices for every query.
pub fn ground_truth(queries: &[Pose], db: &[Pose], crit: &LoopCriterion) -> Vec<BTreeSet<usize>> {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            db.iter()
                .enumerate()
                .filter(|(j, d)| is_true_loop(q, d, crit, i, *j))
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exhaustive dot-product ranking of `db` against `query`, dropping the
/// `exclude`d indices first. Ties go to the lower index.
pub fn retrieve(query: &[f64], db: &[Vec<f64>], k: usize, exclude: &[usize]) -> Result<RetrievalResult> {
    if let Some(bad) = db.iter().position(|d| d.len() != query.len()) {
        return Err(Error::input(format!(
            "database descriptor {bad} has dim {}, query has {}",
            db[bad].len(),
            query.len()
        )));
    }
    let skip: BTreeSet<usize> = exclude.iter().copied().collect();
    let mut scored: Vec<(usize, f64)> = db
        .iter()
        .enumerate()
        .filter(|(j, _)| !skip.contains(j))
        .map(|(j, d)| (j, dot(query, d)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(RetrievalResult {
        query_idx: 0,
        ranked: scored.iter().map(|s| s.0).collect(),
        scores: scored.iter().map(|s| s.1).collect(),
    })
}

/// Full rankings for every query under `crit`'s exclusion window.
pub fn retrieve_all(queries: &[Vec<f64>], db: &[Vec<f64>], crit: &LoopCriterion) -> Result<Vec<RetrievalResult>> {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut r = retrieve(q, db, db.len(), &crit.exclusions(i, db.len()))?;
            r.query_idx = i;
            Ok(r)
        })
        .collect()
}

fn loops_for<'a>(r: &RetrievalResult, gt: &'a [BTreeSet<usize>]) -> Result<&'a BTreeSet<usize>> {
    gt.get(r.query_idx)
        .ok_or_else(|| Error::input(format!("no ground truth for query {}", r.query_idx)))
}

/// Fraction of queries that have at least one true loop whose top `n`
/// contains one. Queries without any true loop are not counted.
pub fn recall_at_n(results: &[RetrievalResult], gt: &[BTreeSet<usize>], n: usize) -> Result<f64> {
    let mut eligible = 0usize;
    let mut hits = 0usize;
    for r in results {
        let loops = loops_for(r, gt)?;
        if loops.is_empty() {
            continue;
        }
        eligible += 1;
        if r.ranked.iter().take(n).any(|j| loops.contains(j)) {
            hits += 1;
        }
    }
    if eligible == 0 {
        return Err(Error::input("no query has a true loop; recall is undefined"));
    }
    Ok(hits as f64 / eligible as f64)
}

pub fn percent_n(db_len: usize, pct: f64) -> usize {
    ((pct / 100.0) * db_len as f64).ceil().max(1.0) as usize
}

pub fn recall_at_percent(results: &[RetrievalResult], gt: &[BTreeSet<usize>], db_len: usize, pct: f64) -> Result<f64> {
    recall_at_n(results, gt, percent_n(db_len, pct))
}

/// Max F1 over thresholds on the top-1 similarity. A query is a positive
/// detection when its top-1 score is at least the threshold; it is a true
/// positive when that top-1 is a true loop. Recall is relative to queries
/// that have a loop.
pub fn f1_score(results: &[RetrievalResult], gt: &[BTreeSet<usize>]) -> Result<f64> {
    let mut tops = Vec::with_capacity(results.len());
    let mut positives = 0usize;
    for r in results {
        let loops = loops_for(r, gt)?;
        if !loops.is_empty() {
            positives += 1;
        }
        if let (Some(&j), Some(&s)) = (r.ranked.first(), r.scores.first()) {
            tops.push((s, loops.contains(&j)));
        }
    }
    if positives == 0 {
        return Err(Error::input("no query has a true loop; F1 is undefined"));
    }
    tops.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp, mut best) = (0usize, 0usize, 0.0f64);
    let mut i = 0;
    while i < tops.len() {
        // Accept every query whose score ties the current threshold.
        let s = tops[i].0;
        while i < tops.len() && tops[i].0 == s {
            if tops[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if tp > 0 {
            let p = tp as f64 / (tp + fp) as f64;
            let r = tp as f64 / positives as f64;
            best = best.max(2.0 * p * r / (p + r));
        }
    }
    Ok(best)
}

/// Cosine similarity.
pub fn fss(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn similarity_matrix(queries: &[Vec<f64>], db: &[Vec<f64>]) -> Vec<Vec<f64>> {
    queries.iter().map(|q| db.iter().map(|d| fss(q, d)).collect()).collect()
}

pub fn to_matrix32(m: &[Vec<f64>]) -> Matrix32 {
    Matrix32 {
        rows: m.len(),
        cols: m.first().map_or(0, Vec::len),
        data: m.iter().flatten().map(|&v| v as f32).collect(),
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "valid" Gaussian filter.
fn filter(x: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * x[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM of two equally sized grids with dynamic range `l`.
pub fn ssim_grid(a: &[f64], b: &[f64], h: usize, w: usize, l: f64) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::input("ssim inputs do not match the stated size"));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::input(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let k = gaussian_kernel();
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (ma, _, _) = filter(a, h, w, &k);
    let (mb, _, _) = filter(b, h, w, &k);
    let (saa, _, _) = filter(&prod(a, a), h, w, &k);
    let (sbb, _, _) = filter(&prod(b, b), h, w, &k);
    let (sab, oh, ow) = filter(&prod(a, b), h, w, &k);
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (mx, my) = (ma[i], mb[i]);
        let vx = saa[i] - mx * mx;
        let vy = sbb[i] - my * my;
        let cov = sab[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / (oh * ow) as f64)
}

/// SSIM over the distance channel, with dynamic range `max_range`.
pub fn ssim(a: &RangeImage, b: &RangeImage, max_range: f64) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::input("ssim images differ in size"));
    }
    let conv = |img: &RangeImage| img.distance().iter().map(|&v| v as f64).collect::<Vec<_>>();
    ssim_grid(&conv(a), &conv(b), a.height(), a.width(), max_range)
}

/// SSIM over the intensity channel (range 1).
pub fn ssim_intensity(a: &RangeImage, b: &RangeImage) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::input("ssim images differ in size"));
    }
    let conv = |img: &RangeImage| img.intensity().iter().map(|&v| v as f64).collect::<Vec<_>>();
    ssim_grid(&conv(a), &conv(b), a.height(), a.width(), 1.0)
}

pub const RECALL_CURVE_MAX: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsMeta {
    pub queries: usize,
    pub queries_with_loops: usize,
    pub database: usize,
    pub recall_1pct_n: usize,
    pub loop_threshold_m: f64,
    pub f1_protocol: String,
    pub recall_protocol: String,
    pub ssim_channel: String,
    pub ssim_intensity_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "recall@1")]
    pub recall_1: f64,
    #[serde(rename = "recall@5")]
    pub recall_5: f64,
    #[serde(rename = "recall@1pct")]
    pub recall_1pct: f64,
    pub f1: f64,
    /// Restored vs clean aligned pairs; absent when no restoration is
    /// evaluated.
    pub ssim_mean: Option<f64>,
    pub fss_mean: Option<f64>,
    pub meta: MetricsMeta,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

/// Everything retrieval-side in one place; image-quality terms are filled
/// in by the caller.
pub fn retrieval_metrics(
    query_desc: &[Vec<f64>],
    db_desc: &[Vec<f64>],
    query_poses: &[Pose],
    db_poses: &[Pose],
    crit: &LoopCriterion,
) -> Result<(Metrics, Vec<RetrievalResult>, Vec<BTreeSet<usize>>)> {
    crit.validate()?;
    if query_desc.len() != query_poses.len() || db_desc.len() != db_poses.len() {
        return Err(Error::input("descriptor and pose counts differ"));
    }
    let results = retrieve_all(query_desc, db_desc, crit)?;
    let gt = ground_truth(query_poses, db_poses, crit);
    let n_pct = percent_n(db_desc.len(), 1.0);
    let metrics = Metrics {
        recall_1: recall_at_n(&results, &gt, 1)?,
        recall_5: recall_at_n(&results, &gt, 5)?,
        recall_1pct: recall_at_n(&results, &gt, n_pct)?,
        f1: f1_score(&results, &gt)?,
        ssim_mean: None,
        fss_mean: None,
        meta: MetricsMeta {
            queries: query_desc.len(),
            queries_with_loops: gt.iter().filter(|g| !g.is_empty()).count(),
            database: db_desc.len(),
            recall_1pct_n: n_pct,
            loop_threshold_m: crit.threshold,
            f1_protocol: "max F1 over thresholds on top-1 similarity; accepted top-1 counts as TP if it is a true loop, else FP; recall denominator = queries with a loop".into(),
            recall_protocol: "fraction of queries with at least one true loop that retrieve one in the top N".into(),
            ssim_channel: "distance, 11x11 gaussian sigma 1.5, L = max_range".into(),
            ssim_intensity_mean: None,
        },
    };
    Ok((metrics, results, gt))
}

pub fn recall_curve(results: &[RetrievalResult], gt: &[BTreeSet<usize>], max_n: usize) -> Result<Vec<(usize, f64)>> {
    (1..=max_n).map(|n| Ok((n, recall_at_n(results, gt, n)?))).collect()
}

pub fn recall_csv(curve: &[(usize, f64)]) -> String {
    let mut s = String::from("n,recall\n");
    for (n, r) in curve {
        s.push_str(&format!("{n},{r}\n"));
    }
    s
}

pub fn parse_recall_csv(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::input(format!("recall csv line {}: {line:?}", i + 1));
        let (n, r) = line.split_once(',').ok_or_else(bad)?;
        out.push((n.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?));
    }
    if out.is_empty() {
        return Err(Error::input("recall csv has no data rows"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = dot(v, v).sqrt();
        v.iter().map(|x| x / n).collect()
    }

    fn result(q: usize, ranked: &[usize], scores: &[f64]) -> RetrievalResult {
        RetrievalResult { query_idx: q, ranked: ranked.to_vec(), scores: scores.to_vec() }
    }

    #[test]
    fn identical_descriptor_ranks_first() {
        let db = vec![unit(&[1.0, 2.0]), unit(&[3.0, -1.0]), unit(&[0.5, 0.5])];
        let r = retrieve(&db[1], &db, 2, &[]).unwrap();
        assert_eq!(r.ranked[0], 1);
        assert!((r.scores[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.ranked.len(), 2);
        let full = retrieve(&db[1], &db, 99, &[1]).unwrap();
        assert_eq!(full.ranked.len(), 2);
        assert!(!full.ranked.contains(&1));
    }

    #[test]
    fn ties_break_to_lower_index() {
        let db = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]];
        let r = retrieve(&[1.0, 0.0], &db, 3, &[]).unwrap();
        assert_eq!(r.ranked, vec![1, 2, 0]);
    }

    #[test]
    fn ranking_matches_pairwise_oracle() {
        let db: Vec<Vec<f64>> = (0..10)
            .map(|i| unit(&[(i as f64 * 1.7).sin(), (i as f64 * 0.9).cos(), i as f64 * 0.1 - 0.4]))
            .collect();
        let q = unit(&[0.3, -0.2, 0.9]);
        let r = retrieve(&q, &db, 10, &[]).unwrap();
        // j precedes k iff j beats k head to head.
        for (a, &j) in r.ranked.iter().enumerate() {
            let beaten = r
                .ranked
                .iter()
                .skip(a + 1)
                .all(|&k| dot(&q, &db[j]) > dot(&q, &db[k]) || (dot(&q, &db[j]) == dot(&q, &db[k]) && j < k));
            assert!(beaten);
        }
    }

    #[test]
    fn loop_examples() {
        let crit = LoopCriterion { same_sequence: true, ..LoopCriterion::default() };
        let p = Pose::identity(0);
        assert!(is_true_loop(&p, &p, &crit, 100, 10));
        assert!(!is_true_loop(&p, &p, &crit, 100, 60));
        let far = Pose::from_xy_yaw(0, 5.1, 0.0, 0.0, 0.0);
        assert!(!is_true_loop(&p, &far, &crit, 100, 10));
        let cross = LoopCriterion::default();
        assert!(is_true_loop(&p, &p, &cross, 100, 60));
    }

    #[test]
    fn hand_recall_four_queries() {
        let gt: Vec<BTreeSet<usize>> = vec![[0].into(), [1].into(), [2].into(), [3].into()];
        let results = vec![
            result(0, &[0, 1], &[0.9, 0.1]),
            result(1, &[0, 1], &[0.8, 0.7]),
            result(2, &[2, 0], &[0.7, 0.1]),
            result(3, &[0, 3], &[0.6, 0.5]),
        ];
        assert_eq!(recall_at_n(&results, &gt, 1).unwrap(), 0.5);
        assert_eq!(recall_at_n(&results, &gt, 2).unwrap(), 1.0);
        // Threshold 0.7 accepts q0, q1, q2: tp 2, fp 1; p = 2/3, r = 1/2.
        let f1 = f1_score(&results, &gt).unwrap();
        let at = |p: f64, r: f64| 2.0 * p * r / (p + r);
        let oracle = [at(1.0, 0.25), at(0.5, 0.25), at(2.0 / 3.0, 0.5), at(0.5, 0.5)]
            .into_iter()
            .fold(0.0, f64::max);
        assert!((f1 - oracle).abs() < 1e-12);
    }

    #[test]
    fn self_retrieval_is_perfect() {
        let db: Vec<Vec<f64>> = (0..30).map(|i| unit(&[1.0, i as f64, (i * i) as f64 * 0.1])).collect();
        let poses: Vec<Pose> = (0..30).map(|i| Pose::from_xy_yaw(i, i as f64 * 10.0, 0.0, 0.0, 0.0)).collect();
        let (m, results, _) = retrieval_metrics(&db, &db, &poses, &poses, &LoopCriterion::default()).unwrap();
        assert_eq!(m.recall_1, 1.0);
        assert_eq!(m.f1, 1.0);
        assert!(results.iter().enumerate().all(|(i, r)| r.ranked[0] == i));
    }

    #[test]
    fn no_loops_is_an_error() {
        let r = vec![result(0, &[0], &[1.0])];
        let gt = vec![BTreeSet::new()];
        assert!(recall_at_n(&r, &gt, 1).is_err());
        assert!(f1_score(&r, &gt).is_err());
    }

    #[test]
    fn fss_examples() {
        assert!((fss(&[0.3, 0.4], &[0.3, 0.4]) - 1.0).abs() < 1e-15);
        assert_eq!(fss(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((fss(&[s, s], &[1.0, 0.0]) - s).abs() < 1e-12);
        let m = similarity_matrix(&[vec![1.0, 2.0], vec![-1.0, 0.5]], &[vec![1.0, 2.0], vec![-1.0, 0.5]]);
        assert!((m[0][0] - 1.0).abs() < 1e-12 && (m[1][1] - 1.0).abs() < 1e-12);
        assert_eq!(m[0][1], m[1][0]);
        assert_eq!(m[0][1], fss(&[1.0, 2.0], &[-1.0, 0.5]));
    }

    /// Direct per-window SSIM with an explicitly built 2D Gaussian.
    fn ssim_reference(a: &[f64], b: &[f64], h: usize, w: usize, l: f64) -> f64 {
        let mut g = vec![vec![0.0; 11]; 11];
        let mut total = 0.0;
        for (i, row) in g.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                *v = (-(di * di + dj * dj) / 4.5).exp();
                total += *v;
            }
        }
        let (c1, c2) = ((0.01 * l) * (0.01 * l), (0.03 * l) * (0.03 * l));
        let mut acc = 0.0;
        let mut count = 0;
        for r in 0..=h - 11 {
            for c in 0..=w - 11 {
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = g[i][j] / total;
                        mx += wgt * a[(r + i) * w + c + j];
                        my += wgt * b[(r + i) * w + c + j];
                    }
                }
                let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = g[i][j] / total;
                        let (dx, dy) = (a[(r + i) * w + c + j] - mx, b[(r + i) * w + c + j] - my);
                        vx += wgt * dx * dx;
                        vy += wgt * dy * dy;
                        cov += wgt * dx * dy;
                    }
                }
                acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn ssim_matches_reference() {
        let (h, w) = (16, 40);
        let a: Vec<f64> = (0..h * w).map(|i| 40.0 * (0.5 + 0.5 * (i as f64 * 0.37).sin())).collect();
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + 6.0 * (i as f64 * 1.3).cos()).collect();
        let got = ssim_grid(&a, &b, h, w, 50.0).unwrap();
        let want = ssim_reference(&a, &b, h, w, 50.0);
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        assert!((ssim_grid(&a, &a, h, w, 50.0).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| 50.0 - v).collect();
        assert!(ssim_grid(&a, &neg, h, w, 50.0).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_tiny_images() {
        assert!(ssim_grid(&[0.0; 100], &[0.0; 100], 10, 10, 1.0).is_err());
    }

    #[test]
    fn recall_csv_round_trips() {
        let curve = vec![(1, 0.5), (2, 0.75)];
        assert_eq!(parse_recall_csv(&recall_csv(&curve)).unwrap(), curve);
        assert!(parse_recall_csv("n,recall\n").is_err());
    }

    proptest! {
        #[test]
        fn recall_is_monotone_and_exclusions_hold(
            seed in 0u64..500,
            nq in 2usize..12,
            ndb in 5usize..40,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vec = |rng: &mut rand_chacha::ChaCha8Rng| unit(&[rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]);
            let db: Vec<Vec<f64>> = (0..ndb).map(|_| vec(&mut rng)).collect();
            let qs: Vec<Vec<f64>> = (0..nq).map(|_| vec(&mut rng)).collect();
            let crit = LoopCriterion { threshold: 3.0, exclusion_window: 3, same_sequence: true };
            let results = retrieve_all(&qs, &db, &crit).unwrap();
            for r in &results {
                prop_assert!(r.ranked.iter().all(|&j| !crit.excluded(r.query_idx, j)));
                prop_assert!(r.scores.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(r.scores.iter().all(|s| (-1.0 - 1e-12..=1.0 + 1e-12).contains(s)));
            }
            let mut gt: Vec<BTreeSet<usize>> = (0..nq).map(|i| (0..ndb).filter(|j| (i + j) % 4 == 0 && !crit.excluded(i, *j)).collect()).collect();
            gt[0].insert(ndb - 1);
            let mut prev = 0.0;
            for n in 1..=ndb {
                let r = recall_at_n(&results, &gt, n).unwrap();
                prop_assert!(r >= prev);
                prev = r;
            }
        }
    }
}
