//! Accuracy of every ablation mode on a drifting SBM, averaged over seeds.
//!
//! `cargo run --release --example sbm_ablation -- [epochs] [noise] [dim]`

use std::time::Instant;

use dynhyper::dyngraph::{generate_sbm, split, SbmParams};
use dynhyper::trainer::{run, Ablation, TrainConfig};

fn main() -> dynhyper::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let epochs = arg(0, 100.0) as usize;
    let noise = arg(1, SbmParams::DEFAULT_FEATURE_NOISE);
    let dim = arg(2, SbmParams::DEFAULT_FEATURE_DIM as f64) as usize;
    let start = Instant::now();
    for mode in Ablation::ALL {
        let mut accs = Vec::new();
        for seed in 0..5 {
            let mut p = SbmParams::new(200, 8, 3, 0.1, 0.01, 0.1).with_seed(seed);
            p.feature_noise = noise;
            p.feature_dim = dim;
            let g = generate_sbm(&p)?;
            let s = split(&g, 5)?;
            let cfg = TrainConfig { seed, epochs, ablation: mode, ..TrainConfig::default() };
            let (_, report) = run(&g, &s, &cfg)?;
            accs.push(report.accuracy.unwrap_or(f64::NAN));
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!("{mode:>16}: mean {:.4} {:?}", mean, accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>());
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
