//! Scripted controllers shared by the environment and acceptance suites.

use clothwm::env::reward::fold_term;
use clothwm::env::{ClothEnv, EnvConfig, GripperMode};

pub fn dual(cfg: EnvConfig) -> ClothEnv {
    ClothEnv::new(cfg.with_mode(GripperMode::Dual)).unwrap()
}

pub fn fold_distance(env: &ClothEnv) -> f64 {
    -fold_term(&env.keypoints())
}

/// Grasp both left corners, lift, carry across by the cloth width, lower,
/// release.
pub fn scripted_fold(env: &mut ClothEnv) {
    let ms = env.config().max_step;
    let across = (env.config().cloth_width / ms).round() as usize;
    let mut plan: Vec<[f64; 8]> = vec![[0., 0., 0., 1., 0., 0., 0., 1.]];
    plan.extend(std::iter::repeat_n([0., 0., ms, 1., 0., 0., ms, 1.], 5));
    plan.extend(std::iter::repeat_n([ms, 0., 0., 1., ms, 0., 0., 1.], across));
    plan.extend(std::iter::repeat_n([0., 0., -ms, 1., 0., 0., -ms, 1.], 5));
    plan.extend(std::iter::repeat_n([0., 0., 0., -1., 0., 0., 0., -1.], 5));
    for a in &plan {
        env.step_flat(a).unwrap();
    }
}
