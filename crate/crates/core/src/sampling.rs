//! Seeded point/direction sampling on the tangent bundle.
//!
//! Generator: `ChaCha8Rng::seed_from_u64(seed)`. Each candidate draws, in
//! order, one `f64` in `[0, 1)` per coordinate (mapped affinely onto the box)
//! followed by one standard normal per direction component; the direction is
//! normalized and scaled by `y_radius`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Name of the pseudo-random generator family, echoed in reports.
pub const GENERATOR: &str = "chacha8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub count: usize,
    pub seed: u64,
    /// Per-coordinate `(low, high)` bounds for base points.
    pub x_box: Vec<(f64, f64)>,
    pub y_radius: f64,
    /// Candidate budget as a multiple of `count`.
    #[serde(default = "default_attempt_factor")]
    pub attempt_factor: usize,
}

fn default_attempt_factor() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SamplingPlan {
    pub fn new(count: usize, seed: u64, x_box: Vec<(f64, f64)>) -> Self {
        SamplingPlan {
            count,
            seed,
            x_box,
            y_radius: 1.0,
            attempt_factor: default_attempt_factor(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.x_box.len()
    }

    /// Infinite deterministic stream of candidate samples.
    pub fn candidates(&self) -> impl Iterator<Item = Sample> + '_ {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        std::iter::repeat_with(move || {
            let x: Vec<f64> = self
                .x_box
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect();
            let y = loop {
                let d: Vec<f64> = (0..self.x_box.len())
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-6 {
                    break d.into_iter().map(|v| v / norm * self.y_radius).collect();
                }
            };
            Sample { x, y }
        })
    }

    /// First `count` candidates accepted by `valid`, and the number rejected.
    pub fn draw(&self, mut valid: impl FnMut(&Sample) -> bool) -> (Vec<Sample>, usize) {
        let budget = self.count.saturating_mul(self.attempt_factor.max(1));
        let mut kept = Vec::with_capacity(self.count);
        let mut skipped = 0;
        for s in self.candidates().take(budget) {
            if kept.len() == self.count {
                break;
            }
            if valid(&s) {
                kept.push(s);
            } else {
                skipped += 1;
            }
        }
        (kept, skipped)
    }
}
