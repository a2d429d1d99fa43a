#![allow(dead_code)]

pub mod oracle;

use octwin::learn::TrainData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random classification instance: rows, labels, class count.
pub struct Tiny {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub k: usize,
}

impl Tiny {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(6..=30);
        let p = rng.random_range(1..=3);
        let k = rng.random_range(2..=3);
        // coarse integer grids give repeated values and ties
        let coarse = rng.random_bool(0.5);
        let x = (0..n)
            .map(|_| {
                (0..p)
                    .map(|_| {
                        if coarse {
                            rng.random_range(0..6) as f64
                        } else {
                            rng.random::<f64>()
                        }
                    })
                    .collect()
            })
            .collect();
        let y = (0..n).map(|_| rng.random_range(0..k)).collect();
        Self { x, y, k }
    }

    pub fn data(&self) -> TrainData {
        let p = self.x[0].len();
        TrainData::new(
            self.x.iter().flatten().cloned().collect(),
            p,
            self.y.clone(),
            vec![1.0; self.y.len()],
            (0..self.k).map(|c| c as f64).collect(),
            (1..=p).map(|j| format!("x{j}")).collect(),
        )
        .unwrap()
    }
}
