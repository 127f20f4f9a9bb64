//! Randomised instances of the on-disk formats.

use clothwm::nn::Checkpoint;
use clothwm::trainer::{Frame, Rollout, StepRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_rollout(rng: &mut ChaCha8Rng) -> Rollout {
    let rgb_len = if rng.random_bool(0.5) { 0 } else { rng.random_range(1..64) };
    let k = rng.random_range(1..10);
    let g = rng.random_range(1..3);
    let a = rng.random_range(1..9);
    let frame = |rng: &mut ChaCha8Rng| Frame {
        rgb: (0..rgb_len).map(|_| rng.random()).collect(),
        keypoints: (0..k).map(|_| [rng.random_range(-1.0..1.0), rng.random(), rng.random()]).collect(),
        grippers: (0..g).map(|_| [rng.random(), rng.random(), rng.random_range(-1e6..1e6)]).collect(),
        picking: (0..g).map(|_| rng.random_bool(0.5)).collect(),
    };
    let initial = frame(rng);
    let n = rng.random_range(0..12);
    let steps = (0..n)
        .map(|i| StepRecord {
            action: (0..a).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(-10.0..0.0),
            done: i + 1 == n && rng.random_bool(0.5),
            frame: frame(rng),
        })
        .collect();
    Rollout { seed: rng.random(), variant: rng.random_range(1..8), iteration: rng.random(), horizon: 12, initial, steps }
}

/// A checkpoint with a random mix of `f32` and exact `f64` entries.
pub fn random_checkpoint(rng: &mut ChaCha8Rng) -> Checkpoint {
    let mut ck = Checkpoint::new();
    for i in 0..rng.random_range(0..6) {
        let shape: Vec<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(1..5)).collect();
        let n: usize = shape.iter().product();
        if rng.random_bool(0.5) {
            let data = (0..n).map(|_| rng.random_range(-1e3f32..1e3)).collect();
            ck.push(&format!("layer{i}.w"), &shape, data);
        } else {
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1e9..1e9)).collect();
            ck.push_f64(&format!("state{i}"), &shape, &data);
        }
    }
    ck
}
