//! Scratch probe for the noisy-client benchmark; prints per-seed final
//! accuracies for dualcrit vs simple average.

use fedagg::baselines::Strategy;
use fedagg::orchestrator::{build_data, run_cell, ExperimentConfig};

fn main() {
    let hidden: Vec<usize> = std::env::args()
        .nth(1)
        .map(|s| {
            if s.is_empty() || s == "none" {
                vec![]
            } else {
                s.split(',').map(|v| v.parse().unwrap()).collect()
            }
        })
        .unwrap_or_else(|| vec![16]);
    let lr: f64 = std::env::args()
        .nth(2)
        .map(|s| s.parse().unwrap())
        .unwrap_or(0.05);
    let epochs: usize = std::env::args()
        .nth(3)
        .map(|s| s.parse().unwrap())
        .unwrap_or(1);

    let mut wins = 0;
    let mut diffs = Vec::new();
    let mut lambda_pos_after3 = 0usize;
    let mut lambda_total_after3 = 0usize;
    for seed in 0..10u64 {
        let mut cfg = ExperimentConfig::default();
        cfg.model.hidden_dims = hidden.clone();
        cfg.train.learning_rate = lr;
        cfg.train.local_epochs = epochs;
        cfg.sweep.seed = 1000 + seed;
        cfg.sweep.combinations = vec![vec![0, 1, 2, 3]];
        let layout = build_data(&cfg).unwrap();
        let dual = run_cell(&cfg, &layout, &[0, 1, 2, 3], Strategy::DualCrit, None).unwrap();
        let simple = run_cell(&cfg, &layout, &[0, 1, 2, 3], Strategy::Simple, None).unwrap();
        let da = dual.rounds.last().unwrap().accuracy;
        let sa = simple.rounds.last().unwrap().accuracy;
        if da >= sa {
            wins += 1;
        }
        diffs.push(da - sa);
        for r in &dual.rounds {
            if r.round > 3 {
                lambda_total_after3 += 1;
                if r.lambda_chosen.unwrap() > 0.0 {
                    lambda_pos_after3 += 1;
                }
            }
        }
        let lambdas: Vec<f64> = dual.rounds.iter().map(|r| r.lambda_chosen.unwrap()).collect();
        println!(
            "seed {seed}: dual {da:.4} simple {sa:.4} diff {:+.4} lambdas {:?}",
            da - sa,
            lambdas
        );
    }
    let mean: f64 = diffs.iter().sum::<f64>() / diffs.len() as f64;
    println!(
        "wins {wins}/10  mean diff {mean:+.4}  lambda>0 after round 3: {lambda_pos_after3}/{lambda_total_after3}"
    );
}
