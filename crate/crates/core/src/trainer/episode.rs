//! Episodes in the simulator, driven by a controller or by random actions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{ClothEnv, Observation, STATE_DIM};
use crate::mdn::{HiddenState, MdnConfig, MdnRnn};
use crate::policy::{Policy, PolicySpec};
use crate::vae::Vae;

use super::config::ExperimentConfig;
use super::rollout::{Frame, Rollout, StepRecord};
use super::seeds::derive_seed;
use super::variant::Representation;
use super::TrainerError;

/// The learned components a variant carries. Shared read-only by workers.
#[derive(Clone, Debug, Default)]
pub struct Models {
    pub vae: Option<Vae>,
    pub mdn: Option<MdnRnn>,
}

/// Controller layout for the configured variant.
pub fn policy_spec(cfg: &ExperimentConfig) -> PolicySpec {
    let v = cfg.variant;
    let hidden = v.uses_mdn().then_some(cfg.mdn.hidden);
    let a = cfg.env.action_dim();
    match v.representation() {
        Representation::Latent => PolicySpec::linear_latent(cfg.vae.latent, hidden, a, cfg.env.max_step),
        Representation::Keypoint => PolicySpec::linear_keypoint(STATE_DIM, hidden, a, cfg.env.max_step),
        Representation::Pixels => PolicySpec::conv_rgb(a, cfg.env.max_step),
    }
}

pub fn mdn_config(cfg: &ExperimentConfig) -> MdnConfig {
    let state_dim = match cfg.variant.representation() {
        Representation::Latent => cfg.vae.latent,
        _ => STATE_DIM,
    };
    MdnConfig {
        state_dim,
        action_dim: cfg.env.action_dim(),
        hidden: cfg.mdn.hidden,
        components: cfg.mdn.components,
    }
}

/// Action as seen by the dynamics model: displacements in units of
/// `max_step`, pick signals unchanged.
pub fn model_action(spec: &PolicySpec, action: &[f64]) -> Vec<f32> {
    action
        .iter()
        .enumerate()
        .map(|(i, &a)| if spec.is_pick_channel(i) { a as f32 } else { (a / spec.max_step) as f32 })
        .collect()
}

/// State vector fed to the controller and the dynamics model.
pub fn features(cfg: &ExperimentConfig, models: &Models, obs: &Observation) -> Result<Vec<f64>, TrainerError> {
    Ok(match cfg.variant.representation() {
        Representation::Latent => {
            let vae = models.vae.as_ref().ok_or(TrainerError::MissingModel("vae"))?;
            vae.encode(&obs.rgb, true, 0)?.mu.iter().map(|&v| v as f64).collect()
        }
        Representation::Keypoint => obs.normalized_state(),
        Representation::Pixels => Vec::new(),
    })
}

pub enum Driver<'a> {
    Policy(&'a Policy),
    /// Uniform random actions in the clamp box, seeded.
    Random(u64),
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub total_return: f64,
    pub rollout: Option<Rollout>,
}

/// Runs one episode of `cfg.env.horizon` steps. `record` carries the
/// iteration index to stamp on the stored rollout.
pub fn run_episode(cfg: &ExperimentConfig, models: &Models, driver: &Driver<'_>, seed: u64, record: Option<u32>) -> Result<Episode, TrainerError> {
    let mut env = ClothEnv::new(cfg.env.clone())?;
    env.set_rendering(cfg.variant.needs_pixels());
    let mut obs = env.reset(seed);
    let spec = policy_spec(cfg);
    let mut hs = HiddenState::zeros(cfg.mdn.hidden);
    let mut rng = match driver {
        Driver::Random(s) => Some(ChaCha8Rng::seed_from_u64(*s)),
        Driver::Policy(_) => None,
    };
    let mut rollout = record.map(|iteration| Rollout {
        seed,
        variant: cfg.variant.id(),
        iteration,
        horizon: cfg.env.horizon as u16,
        initial: Frame::from(obs.clone()),
        steps: Vec::with_capacity(cfg.env.horizon),
    });
    let mut total = 0.0;
    for _ in 0..cfg.env.horizon {
        let action = match driver {
            Driver::Random(_) => cfg.env.random_action(rng.as_mut().unwrap()),
            Driver::Policy(p) => {
                if cfg.variant.representation() == Representation::Pixels {
                    p.act_conv(&obs.rgb)?
                } else {
                    let x = features(cfg, models, &obs)?;
                    let a = p.act(&x, models.mdn.as_ref().map(|_| hs.h.iter().map(|&v| v as f64).collect::<Vec<_>>()).as_deref())?;
                    if let Some(m) = &models.mdn {
                        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
                        hs = m.advance(&x32, &model_action(&spec, &a), &hs)?;
                    }
                    a
                }
            }
        };
        let step = env.step_flat(&action)?;
        total += step.reward;
        obs = step.observation;
        if let Some(r) = rollout.as_mut() {
            r.steps.push(StepRecord { action, reward: step.reward, done: step.done, frame: Frame::from(obs.clone()) });
        }
        if step.done {
            break;
        }
    }
    Ok(Episode { total_return: total, rollout })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnStats {
    pub mean: f64,
    /// Sample standard deviation (0 for a single episode).
    pub std: f64,
    pub returns: Vec<f64>,
}

impl ReturnStats {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std = if returns.len() > 1 {
            (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std, returns }
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.returns.len() as f64).sqrt()
    }

    /// Normal-approximation 95% interval of the mean.
    pub fn ci95(&self) -> (f64, f64) {
        let h = 1.96 * self.std_error();
        (self.mean - h, self.mean + h)
    }
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, TrainerError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainerError::Corrupt(format!("thread pool: {e}")))
}

/// Mean return of `genome` over `n_episodes` seeded episodes.
pub fn evaluate(cfg: &ExperimentConfig, models: &Models, genome: &[f64], n_episodes: usize, seed: u64) -> Result<ReturnStats, TrainerError> {
    let policy = Policy::new(policy_spec(cfg), genome)?;
    let pool = thread_pool(cfg.threads)?;
    let returns = pool.install(|| {
        (0..n_episodes)
            .into_par_iter()
            .map(|i| run_episode(cfg, models, &Driver::Policy(&policy), derive_seed(seed, "eval", &[i as u64]), None).map(|e| e.total_return))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(ReturnStats::from_returns(returns))
}

/// Return statistics of the uniform random controller.
pub fn evaluate_random(cfg: &ExperimentConfig, n_episodes: usize, seed: u64) -> Result<ReturnStats, TrainerError> {
    let models = Models::default();
    let returns = (0..n_episodes)
        .map(|i| {
            let s = derive_seed(seed, "random-eval", &[i as u64]);
            run_episode(cfg, &models, &Driver::Random(s), s, None).map(|e| e.total_return)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReturnStats::from_returns(returns))
}
