//! Keypoint subsampling and the fold reward.

use super::cloth::{norm, sub, ClothState, Vec3};
use super::EnvError;

pub const KEYPOINT_COLS: usize = 4;
pub const KEYPOINT_ROWS: usize = 6;
pub const NUM_KEYPOINTS: usize = KEYPOINT_COLS * KEYPOINT_ROWS;

/// Particle indices of the 4×6 keypoint grid, row-major.
pub fn keypoint_indices(cols: usize, rows: usize) -> Result<Vec<usize>, EnvError> {
    if cols < KEYPOINT_COLS || rows < KEYPOINT_ROWS {
        return Err(EnvError::GridTooSmall { cols, rows });
    }
    let pick = |i: usize, n: usize, k: usize| ((i * (n - 1)) as f64 / (k - 1) as f64).round() as usize;
    let mut out = Vec::with_capacity(NUM_KEYPOINTS);
    for j in 0..KEYPOINT_ROWS {
        let r = pick(j, rows, KEYPOINT_ROWS);
        for i in 0..KEYPOINT_COLS {
            out.push(r * cols + pick(i, cols, KEYPOINT_COLS));
        }
    }
    Ok(out)
}

pub fn extract_keypoints(state: &ClothState) -> Result<Vec<Vec3>, EnvError> {
    Ok(keypoint_indices(state.cols, state.rows)?
        .into_iter()
        .map(|i| state.positions[i])
        .collect())
}

/// `-Σ_k ‖p_k − p_mirror(k)‖` over every keypoint, mirroring columns across
/// the vertical centre axis. Each pair therefore counts twice.
pub fn fold_term(keypoints: &[Vec3]) -> f64 {
    let mut total = 0.0;
    for r in 0..KEYPOINT_ROWS {
        for c in 0..KEYPOINT_COLS {
            let a = keypoints[r * KEYPOINT_COLS + c];
            let b = keypoints[r * KEYPOINT_COLS + (KEYPOINT_COLS - 1 - c)];
            total += norm(sub(a, b));
        }
    }
    -total
}

pub fn centroid_xy(keypoints: &[Vec3]) -> [f64; 2] {
    let n = keypoints.len() as f64;
    let sx: f64 = keypoints.iter().map(|p| p[0]).sum();
    let sy: f64 = keypoints.iter().map(|p| p[1]).sum();
    [sx / n, sy / n]
}

/// `-λ · ‖centroid_xy − camera_centre‖`.
pub fn center_term(keypoints: &[Vec3], camera_center: [f64; 2], lambda: f64) -> f64 {
    let c = centroid_xy(keypoints);
    let (dx, dy) = (c[0] - camera_center[0], c[1] - camera_center[1]);
    -lambda * (dx * dx + dy * dy).sqrt()
}

pub fn compute_reward(keypoints: &[Vec3], camera_center: [f64; 2], lambda: f64) -> f64 {
    fold_term(keypoints) + center_term(keypoints, camera_center, lambda)
}
