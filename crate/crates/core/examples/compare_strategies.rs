//! Trains and evaluates strategies on the toy world and prints one metrics
//! line per run; per-epoch losses go to stderr.
//!
//! Usage: `compare_strategies [CONFIG] [EPOCHS] [SEEDS] [STRATEGIES]`, e.g.
//! `compare_strategies configs/toy.toml 20 0,1,2 direct,union`. An empty
//! CONFIG argument selects the built-in toy preset.

use std::time::Instant;

use rangeloc::config::ExperimentConfig;
use rangeloc::experiment::{build_dataset, diagonal_contrast, evaluate, train_strategy};
use rangeloc::trainer::Strategy;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = match args.get(1) {
        Some(p) if !p.is_empty() => ExperimentConfig::load(std::path::Path::new(p)).unwrap(),
        _ => ExperimentConfig::toy(),
    };
    if let Some(e) = args.get(2) {
        cfg.train.epochs = e.parse().unwrap();
    }
    let seeds: Vec<u64> = args.get(3).map_or(vec![0], |s| s.split(',').map(|x| x.parse().unwrap()).collect());
    let strategies: Vec<Strategy> = args
        .get(4)
        .map_or(Strategy::ALL.to_vec(), |s| s.split(',').map(|x| x.parse().unwrap()).collect());
    let t = Instant::now();
    let ds = build_dataset(&cfg).unwrap();
    eprintln!("dataset {} scans in {:.1}s", ds.len(), t.elapsed().as_secs_f64());
    for &seed in &seeds {
        for &s in &strategies {
            let t = Instant::now();
            let (models, _) = train_strategy(&ds, &cfg, s, seed, |l, _| {
                eprintln!(
                    "  {s} e{} {:?} loss {:.4} rec {:.4} ltd {:.4} trip {:.4} steps {} skip {} t={:.0}s",
                    l.epoch, l.phase, l.loss, l.loss_rec, l.loss_ltd, l.loss_triplet, l.steps, l.skipped,
                    t.elapsed().as_secs_f64()
                );
                Ok(())
            })
            .unwrap();
            let ev = evaluate(&ds, &models, &cfg).unwrap();
            let (d, o) = diagonal_contrast(&ev.similarity);
            let m = &ev.metrics;
            println!(
                "seed {seed} {s:<8} R@1 {:.3} R@5 {:.3} R@1% {:.3} F1 {:.3} ssim {:.3} fss {:.3} diag {:.3} off {:.3} ({:.0}s)",
                m.recall_1, m.recall_5, m.recall_1pct, m.f1, m.ssim_mean.unwrap(), m.fss_mean.unwrap(), d, o,
                t.elapsed().as_secs_f64()
            );
        }
    }
}
