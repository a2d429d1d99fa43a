mod common;

use common::{oracle::best_axis_error, Tiny};
use octwin::learn::{train_with, TrainConfig};

#[test]
fn tiny_instances_match_exhaustive_search() {
    let mut misses = Vec::new();
    for seed in 0..60 {
        let inst = Tiny::random(seed);
        for depth in 1..=2 {
            let want = best_axis_error(&inst.x, &inst.y, inst.k, depth);
            let cfg = TrainConfig {
                max_depth: depth,
                restarts: 40,
                seed,
                ..TrainConfig::default()
            };
            let out = train_with(&inst.data(), &cfg, &[]).unwrap();
            let got = (out.report.objective.misclassification * inst.y.len() as f64).round() as usize;
            if got != want {
                misses.push((seed, depth, got, want));
            }
        }
    }
    assert!(misses.is_empty(), "{misses:?}");
}
