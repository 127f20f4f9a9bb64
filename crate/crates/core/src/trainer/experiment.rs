//! The iterative training procedure and its resumable run directory.
//!
//! A run directory holds:
//!
//! ```text
//! config.txt    resolved configuration, one key per line with its source
//! manifest.txt  variant, seed, config digest, file names
//! metrics.csv   one row per controller generation
//! losses.csv    one row per model-fitting epoch
//! best.ckpt     best genome so far
//! models.ckpt   latest fitted VAE / MDN-RNN
//! state.ckpt    everything needed to resume after the last generation
//! rollouts/     recorded episodes
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cma::{CmaConfig, CmaState};
use crate::env::render::to_ppm;
use crate::env::{RGB_BYTES, STATE_SCALE};
use crate::mdn::{MdnRnn, Sequence};
use crate::nn::{Adam, Checkpoint};
use crate::policy::{read_genome, write_genome, Policy};
use crate::vae::Vae;

use super::buffer::{buffer_sample, RolloutBuffer};
use super::config::{parse_pairs, Preset, ResolvedConfig};
use super::episode::{evaluate, mdn_config, model_action, policy_spec, run_episode, thread_pool, Driver, Models, ReturnStats};
use super::metrics::{write_atomic, GenerationRow, LossRow, RunMetrics};
use super::rollout::{Frame, Rollout};
use super::seeds::derive_seed;
use super::variant::{Dynamics, Representation, Variant};
use super::{ExperimentConfig, TrainerError};

/// Largest number of random rollouts held in memory at once while collecting.
const COLLECT_CHUNK: usize = 32;
/// Held-out frames used to score the VAE after each epoch.
const HELDOUT_FRAMES: usize = 256;

#[derive(Clone, Debug, Default, PartialEq)]
struct Progress {
    initial_done: bool,
    initial_len: usize,
    iteration: usize,
    fitted: bool,
    gens_in_iteration: usize,
    generation: usize,
    elapsed_s: f64,
    /// Buffer length when each iteration's generations began.
    gen_start: Vec<usize>,
}

/// Random-action rollouts appended to `buffer`; returns their ids.
pub fn collect_random(cfg: &ExperimentConfig, buffer: &mut RolloutBuffer, n: usize, seed: u64) -> Result<Vec<usize>, TrainerError> {
    let pool = thread_pool(cfg.threads)?;
    let models = Models::default();
    let mut ids = Vec::with_capacity(n);
    for start in (0..n).step_by(COLLECT_CHUNK) {
        let end = (start + COLLECT_CHUNK).min(n);
        let batch: Vec<Rollout> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let s = derive_seed(seed, "random", &[i as u64]);
                    run_episode(cfg, &models, &Driver::Random(s), s, Some(0)).map(|e| e.rollout.expect("recorded"))
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        for r in &batch {
            ids.push(buffer.append(r)?);
        }
    }
    Ok(ids)
}

/// Normalised keypoint-and-gripper state of a stored frame.
pub fn frame_state(f: &Frame) -> Vec<f32> {
    f.keypoints.iter().chain(&f.grippers).flat_map(|p| p.iter().map(|&v| (v / STATE_SCALE) as f32)).collect()
}

/// Training sequence for the dynamics model.
pub fn rollout_sequence(cfg: &ExperimentConfig, vae: Option<&Vae>, r: &Rollout) -> Result<Sequence, TrainerError> {
    let spec = policy_spec(cfg);
    let states = match cfg.variant.representation() {
        Representation::Latent => {
            let vae = vae.ok_or(TrainerError::MissingModel("vae"))?;
            let frames: Vec<&[u8]> = r.frames().map(|f| f.rgb.as_slice()).collect();
            vae.encode_means(&frames)?
        }
        _ => r.frames().map(frame_state).collect(),
    };
    let actions = r.steps.iter().map(|s| model_action(&spec, &s.action)).collect();
    Ok(Sequence { states, actions })
}

fn split_holdout(ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
    if ids.len() < 10 {
        return (ids.to_vec(), Vec::new());
    }
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, &id) in ids.iter().enumerate() {
        if i % 10 == 9 {
            held.push(id);
        } else {
            train.push(id);
        }
    }
    (train, held)
}

pub struct Experiment {
    cfg: ExperimentConfig,
    dir: PathBuf,
    buffer: RolloutBuffer,
    models: Models,
    cma: CmaState,
    metrics: RunMetrics,
    progress: Progress,
    pool: rayon::ThreadPool,
    clock: Instant,
}

impl Experiment {
    /// Opens `dir`, resuming from `state.ckpt` when present.
    pub fn open(resolved: &ResolvedConfig, dir: &Path) -> Result<Self, TrainerError> {
        let cfg = resolved.config.clone();
        cfg.validate()?;
        fs::create_dir_all(dir)?;
        let manifest = Self::manifest(&cfg);
        let mpath = dir.join("manifest.txt");
        if let Ok(old) = fs::read_to_string(&mpath) {
            let digest = |t: &str| t.lines().find(|l| l.starts_with("config_digest=")).map(str::to_string);
            if digest(&old) != digest(&manifest) {
                return Err(TrainerError::RunMismatch(dir.to_path_buf()));
            }
        }
        write_atomic(&dir.join("config.txt"), resolved.to_text().as_bytes())?;
        write_atomic(&mpath, manifest.as_bytes())?;

        let spec = policy_spec(&cfg);
        let cma_cfg = CmaConfig {
            dim: spec.param_count(),
            population: cfg.cma.population,
            elite_fraction: cfg.cma.elite_fraction,
            weights: None,
            rates: None,
            sigma0: cfg.cma.sigma0,
            seed: derive_seed(cfg.seed, "cma", &[]),
            elitism: cfg.cma.elitism,
        };
        let mut exp = Self {
            buffer: RolloutBuffer::open(&dir.join("rollouts"))?,
            models: Self::fresh_models(&cfg, 0)?,
            cma: CmaState::new(cma_cfg, &vec![0.0; spec.param_count()])?,
            metrics: RunMetrics::default(),
            progress: Progress::default(),
            pool: thread_pool(cfg.threads)?,
            clock: Instant::now(),
            dir: dir.to_path_buf(),
            cfg,
        };
        let state = dir.join("state.ckpt");
        if state.exists() {
            exp.restore(&Checkpoint::load(&state)?)?;
        } else {
            exp.buffer.truncate(0)?;
        }
        Ok(exp)
    }

    fn manifest(cfg: &ExperimentConfig) -> String {
        format!(
            "variant={}\nlabel={}\nseed={}\nconfig_digest={}\nconfig=config.txt\nmetrics=metrics.csv\nlosses=losses.csv\nbest_genome=best.ckpt\nmodels=models.ckpt\nstate=state.ckpt\nrollouts=rollouts\n",
            cfg.variant,
            cfg.variant.label(),
            cfg.seed,
            cfg.digest()
        )
    }

    fn fresh_models(cfg: &ExperimentConfig, round: u64) -> Result<Models, TrainerError> {
        let v = cfg.variant;
        let vae = if v.uses_vae() { Some(Vae::new(cfg.vae.arch(), derive_seed(cfg.seed, "vae-init", &[round]))?) } else { None };
        let mdn_seed = derive_seed(cfg.seed, "mdn-init", &[round]);
        let mdn = match v.dynamics() {
            Dynamics::Trained => Some(MdnRnn::new(mdn_config(cfg), mdn_seed)),
            Dynamics::Untrained => Some(MdnRnn::make_untrained(mdn_config(cfg), mdn_seed)),
            Dynamics::Absent => None,
        };
        Ok(Models { vae, mdn })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn models(&self) -> &Models {
        &self.models
    }

    pub fn cma(&self) -> &CmaState {
        &self.cma
    }

    pub fn buffer(&self) -> &RolloutBuffer {
        &self.buffer
    }

    pub fn generations_done(&self) -> usize {
        self.progress.generation
    }

    /// `(iterations, generations per iteration, record rollouts)`.
    fn schedule(&self) -> (usize, usize, bool) {
        let s = &self.cfg.schedule;
        if self.cfg.variant.iterative() {
            (s.system_iterations, s.generations_per_iteration, true)
        } else {
            (1, s.ablation_generations, false)
        }
    }

    pub fn total_generations(&self) -> usize {
        let (i, g, _) = self.schedule();
        i * g
    }

    /// Runs the remaining schedule, or stops after `max_generations` more
    /// generations when given.
    pub fn run(&mut self, max_generations: Option<usize>) -> Result<&RunMetrics, TrainerError> {
        let (iters, gens, record) = self.schedule();
        let stop_at = max_generations.map(|m| self.progress.generation + m);
        if !self.progress.initial_done {
            let v = self.cfg.variant;
            if v.uses_vae() || v.dynamics() == Dynamics::Trained {
                let n = self.cfg.schedule.initial_random_rollouts;
                collect_random(&self.cfg, &mut self.buffer, n, derive_seed(self.cfg.seed, "initial", &[]))?;
            }
            self.progress.initial_len = self.buffer.len();
            self.progress.initial_done = true;
            self.save_state()?;
        }
        while self.progress.iteration < iters {
            let it = self.progress.iteration;
            if !self.progress.fitted {
                self.fit_models(it)?;
                self.progress.gen_start.push(self.buffer.len());
                self.progress.fitted = true;
                self.save_models()?;
                self.save_state()?;
            }
            while self.progress.gens_in_iteration < gens {
                if stop_at.is_some_and(|s| self.progress.generation >= s) {
                    return Ok(&self.metrics);
                }
                self.generation(it, record)?;
            }
            self.progress.iteration += 1;
            self.progress.fitted = false;
            self.progress.gens_in_iteration = 0;
            self.save_state()?;
        }
        Ok(&self.metrics)
    }

    /// Rollout ids used to fit the models at iteration `it`: the initial
    /// random set first, afterwards the previous iteration's rollouts plus a
    /// uniform replay sample of everything older.
    pub fn training_set(&self, it: usize) -> Result<Vec<usize>, TrainerError> {
        if it == 0 {
            return Ok((0..self.progress.initial_len).collect());
        }
        let prev_start = *self.progress.gen_start.get(it - 1).ok_or(TrainerError::Corrupt("iteration bookkeeping".into()))?;
        let end = self.progress.gen_start.get(it).copied().unwrap_or(self.buffer.len());
        let mut ids: Vec<usize> = (prev_start..end).collect();
        let older: Vec<usize> = (0..prev_start).collect();
        let k = self.cfg.schedule.replay_rollouts.min(older.len());
        ids.extend(buffer_sample(&older, k, derive_seed(self.cfg.seed, "replay", &[it as u64]))?);
        Ok(ids)
    }

    fn fit_models(&mut self, it: usize) -> Result<(), TrainerError> {
        let v = self.cfg.variant;
        if !(v.uses_vae() || v.dynamics() == Dynamics::Trained) {
            return Ok(());
        }
        let ids = self.training_set(it)?;
        if ids.is_empty() {
            return Err(TrainerError::InsufficientData { needed: 1, available: 0 });
        }
        if self.cfg.from_scratch && it > 0 {
            let fresh = Self::fresh_models(&self.cfg, it as u64)?;
            if v.uses_vae() {
                self.models.vae = fresh.vae;
            }
            if v.dynamics() == Dynamics::Trained {
                self.models.mdn = fresh.mdn;
            }
        }
        let (train, held) = split_holdout(&ids);
        if v.uses_vae() {
            self.fit_vae(it, &train, &held)?;
        }
        if v.dynamics() == Dynamics::Trained {
            self.fit_mdn(it, &train, &held)?;
        }
        Ok(())
    }

    fn fit_vae(&mut self, it: usize, train: &[usize], held: &[usize]) -> Result<(), TrainerError> {
        let vc = self.cfg.vae.clone();
        let counts: Vec<usize> = train.iter().map(|&id| self.buffer.entries()[id].steps + 1).collect();
        let total: usize = counts.iter().sum();
        let mut keep = vec![true; total];
        if total > vc.frame_pool {
            keep = vec![false; total];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, "frame-pool", &[it as u64]));
            for i in rand::seq::index::sample(&mut rng, total, vc.frame_pool) {
                keep[i] = true;
            }
        }
        let mut pool: Vec<Vec<u8>> = Vec::new();
        let mut at = 0;
        for &id in train {
            let r = self.buffer.load(id)?;
            for f in r.frames() {
                if keep[at] {
                    pool.push(f.rgb.clone());
                }
                at += 1;
            }
        }
        let held_total: usize = held.iter().map(|&id| self.buffer.entries()[id].steps + 1).sum();
        let stride = held_total.div_ceil(HELDOUT_FRAMES).max(1);
        let mut held_frames: Vec<Vec<u8>> = Vec::new();
        let mut k = 0;
        for &id in held {
            for f in self.buffer.load(id)?.frames() {
                if k % stride == 0 {
                    held_frames.push(f.rgb.clone());
                }
                k += 1;
            }
        }
        let held_refs: Vec<&[u8]> = held_frames.iter().map(Vec::as_slice).collect();
        let vae = self.models.vae.as_mut().ok_or(TrainerError::MissingModel("vae"))?;
        let opt = Adam { lr: vc.lr, ..Adam::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, "vae-fit", &[it as u64]));
        for epoch in 0..vc.epochs {
            let refs: Vec<&[u8]> = if vc.frames_per_epoch > 0 && vc.frames_per_epoch < pool.len() {
                rand::seq::index::sample(&mut rng, pool.len(), vc.frames_per_epoch).into_iter().map(|i| pool[i].as_slice()).collect()
            } else {
                pool.iter().map(Vec::as_slice).collect()
            };
            let train_loss = vae.train_epoch(&refs, vc.batch, &opt, &mut rng)?;
            let heldout_loss = if held_refs.is_empty() { f64::NAN } else { vae.reconstruction_mse(&held_refs)? };
            self.metrics.losses.push(LossRow { iteration: it, model: "vae".into(), epoch, train_loss, heldout_loss });
        }
        Ok(())
    }

    fn fit_mdn(&mut self, it: usize, train: &[usize], held: &[usize]) -> Result<(), TrainerError> {
        let seqs = |ids: &[usize]| -> Result<Vec<Sequence>, TrainerError> {
            ids.iter().map(|&id| rollout_sequence(&self.cfg, self.models.vae.as_ref(), &self.buffer.load(id)?)).collect()
        };
        let train_seqs = seqs(train)?;
        let held_seqs = seqs(held)?;
        let mc = self.cfg.mdn.clone();
        let mdn = self.models.mdn.as_mut().ok_or(TrainerError::MissingModel("mdn"))?;
        let opt = Adam { lr: mc.lr, ..Adam::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, "mdn-fit", &[it as u64]));
        for epoch in 0..mc.epochs {
            let train_loss = mdn.train_epoch(&train_seqs, mc.batch, &opt, &mut rng)?;
            let heldout_loss = if held_seqs.is_empty() { f64::NAN } else { mdn.mean_nll(&held_seqs)? };
            self.metrics.losses.push(LossRow { iteration: it, model: "mdn".into(), epoch, train_loss, heldout_loss });
        }
        Ok(())
    }

    fn generation(&mut self, it: usize, record: bool) -> Result<(), TrainerError> {
        let g = self.progress.generation;
        let cands = self.cma.ask()?;
        let spec = policy_spec(&self.cfg);
        let policies = cands.iter().map(|c| Policy::new(spec.clone(), c)).collect::<Result<Vec<_>, _>>()?;
        let rpc = self.cfg.schedule.rollouts_per_candidate;
        let jobs: Vec<(usize, usize)> = (0..cands.len()).flat_map(|c| (0..rpc).map(move |e| (c, e))).collect();
        let (cfg, models, seed) = (&self.cfg, &self.models, self.cfg.seed);
        let episodes = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(c, e)| {
                    let s = derive_seed(seed, "episode", &[g as u64, c as u64, e as u64]);
                    run_episode(cfg, models, &Driver::Policy(&policies[c]), s, record.then_some(it as u32))
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        let returns: Vec<f64> = episodes.iter().map(|e| e.total_return).collect();
        let fitness: Vec<f64> = returns.chunks(rpc).map(|r| -(r.iter().sum::<f64>() / rpc as f64)).collect();
        self.cma.tell(&cands, &fitness)?;
        if record {
            for e in &episodes {
                self.buffer.append(e.rollout.as_ref().expect("recorded"))?;
            }
        }
        let stats = ReturnStats::from_returns(returns);
        let (lo, hi) = stats.ci95();
        let (best, best_fit) = self.cma.best_so_far()?;
        let best = best.to_vec();
        self.progress.generation += 1;
        self.progress.gens_in_iteration += 1;
        let evals = self.metrics.evaluations() + jobs.len() as u64;
        self.metrics.generations.push(GenerationRow {
            generation: self.progress.generation,
            evals_cumulative: evals,
            mean_return: stats.mean,
            ci95_low: lo,
            ci95_high: hi,
            best_so_far: -best_fit,
            wall_clock_s: self.cfg.record_wall_clock.then(|| self.elapsed()),
        });
        let mut ck = Checkpoint::new();
        write_genome(&mut ck, "genome", &best);
        ck.push_f64("return", &[], &[-best_fit]);
        ck.save(&self.dir.join("best.ckpt"))?;
        self.save_state()
    }

    fn elapsed(&self) -> f64 {
        self.progress.elapsed_s + self.clock.elapsed().as_secs_f64()
    }

    fn save_models(&self) -> Result<(), TrainerError> {
        let mut ck = Checkpoint::new();
        if let Some(v) = &self.models.vae {
            v.write_checkpoint(&mut ck, false);
        }
        if let Some(m) = &self.models.mdn {
            m.write_checkpoint(&mut ck, false);
        }
        ck.save(&self.dir.join("models.ckpt"))?;
        Ok(())
    }

    fn save_state(&self) -> Result<(), TrainerError> {
        self.metrics.write(&self.dir)?;
        let p = &self.progress;
        let mut ck = Checkpoint::new();
        ck.push_f64(
            "progress",
            &[9],
            &[
                p.initial_done as u8 as f64,
                p.initial_len as f64,
                p.iteration as f64,
                p.fitted as u8 as f64,
                p.gens_in_iteration as f64,
                p.generation as f64,
                self.elapsed(),
                self.buffer.len() as f64,
                self.metrics.losses.len() as f64,
            ],
        );
        let gs: Vec<f64> = p.gen_start.iter().map(|&v| v as f64).collect();
        ck.push_f64("gen_start", &[gs.len()], &gs);
        let rows: Vec<f64> = self
            .metrics
            .generations
            .iter()
            .flat_map(|r| {
                [
                    r.generation as f64,
                    r.evals_cumulative as f64,
                    r.mean_return,
                    r.ci95_low,
                    r.ci95_high,
                    r.best_so_far,
                    r.wall_clock_s.unwrap_or(f64::NAN),
                ]
            })
            .collect();
        ck.push_f64("rows", &[self.metrics.generations.len(), 7], &rows);
        let losses: Vec<f64> = self
            .metrics
            .losses
            .iter()
            .flat_map(|l| [l.iteration as f64, (l.model == "mdn") as u8 as f64, l.epoch as f64, l.train_loss, l.heldout_loss])
            .collect();
        ck.push_f64("losses", &[self.metrics.losses.len(), 5], &losses);
        self.cma.write_checkpoint(&mut ck, "cma.");
        if let Some(v) = &self.models.vae {
            v.write_checkpoint(&mut ck, true);
        }
        if let Some(m) = &self.models.mdn {
            m.write_checkpoint(&mut ck, true);
        }
        ck.save(&self.dir.join("state.ckpt"))?;
        Ok(())
    }

    fn restore(&mut self, ck: &Checkpoint) -> Result<(), TrainerError> {
        let get = |name: &str| ck.get_f64(name).ok_or_else(|| TrainerError::Corrupt(format!("state.ckpt: missing {name}")));
        let p = get("progress")?;
        if p.len() != 9 {
            return Err(TrainerError::Corrupt("state.ckpt: progress".into()));
        }
        self.progress = Progress {
            initial_done: p[0] != 0.0,
            initial_len: p[1] as usize,
            iteration: p[2] as usize,
            fitted: p[3] != 0.0,
            gens_in_iteration: p[4] as usize,
            generation: p[5] as usize,
            elapsed_s: p[6],
            gen_start: get("gen_start")?.into_iter().map(|v| v as usize).collect(),
        };
        self.buffer.truncate(p[7] as usize)?;
        if self.buffer.len() != p[7] as usize {
            return Err(TrainerError::Corrupt("rollout buffer is shorter than the saved state".into()));
        }
        let rows = get("rows")?;
        self.metrics.generations = rows
            .chunks_exact(7)
            .map(|r| GenerationRow {
                generation: r[0] as usize,
                evals_cumulative: r[1] as u64,
                mean_return: r[2],
                ci95_low: r[3],
                ci95_high: r[4],
                best_so_far: r[5],
                wall_clock_s: (!r[6].is_nan()).then_some(r[6]),
            })
            .collect();
        self.metrics.losses = get("losses")?
            .chunks_exact(5)
            .map(|l| LossRow {
                iteration: l[0] as usize,
                model: if l[1] != 0.0 { "mdn".into() } else { "vae".into() },
                epoch: l[2] as usize,
                train_loss: l[3],
                heldout_loss: l[4],
            })
            .collect();
        self.cma = CmaState::read_checkpoint(ck, "cma.")?;
        if let Some(v) = self.models.vae.as_mut() {
            v.read_checkpoint(ck)?;
        }
        if let Some(m) = self.models.mdn.as_mut() {
            m.read_checkpoint(ck)?;
        }
        self.metrics.write(&self.dir)?;
        Ok(())
    }
}

/// Runs (or resumes) the configured experiment in `dir`.
pub fn run_experiment(resolved: &ResolvedConfig, dir: &Path) -> Result<RunMetrics, TrainerError> {
    let mut exp = Experiment::open(resolved, dir)?;
    exp.run(None)?;
    Ok(exp.metrics().clone())
}

/// Loads the models saved next to a run's genome.
pub fn load_models(cfg: &ExperimentConfig, dir: &Path) -> Result<Models, TrainerError> {
    let mut models = Experiment::fresh_models(cfg, 0)?;
    if models.vae.is_some() || models.mdn.is_some() {
        let ck = Checkpoint::load(&dir.join("models.ckpt"))?;
        if let Some(v) = models.vae.as_mut() {
            v.read_checkpoint(&ck)?;
        }
        if let Some(m) = models.mdn.as_mut() {
            m.read_checkpoint(&ck)?;
        }
    }
    Ok(models)
}

/// Directory name used for one variant inside an ablation root.
pub fn variant_dir_name(v: Variant) -> String {
    format!("variant-{}-{}", v.id(), v.label())
}

/// Runs all seven variants under `root`, one directory each, in variant order.
pub fn ablate(preset: Preset, file: &[(String, String)], overrides: &[(String, String)], root: &Path) -> Result<Vec<PathBuf>, TrainerError> {
    let mut dirs = Vec::new();
    for v in Variant::all() {
        let mut ov = overrides.to_vec();
        ov.push(("run.variant".into(), v.id().to_string()));
        let rc = ResolvedConfig::resolve(preset, file, &ov)?;
        let dir = root.join(variant_dir_name(v));
        run_experiment(&rc, &dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Configuration recorded in a run directory.
pub fn load_run_config(dir: &Path) -> Result<ExperimentConfig, TrainerError> {
    let text = fs::read_to_string(dir.join("config.txt"))?;
    Ok(ResolvedConfig::resolve(Preset::Desk, &parse_pairs(&text)?, &[])?.config)
}

/// Evaluates the genome stored at `path`, using the configuration and
/// models of the run directory that contains it.
pub fn evaluate_genome_file(path: &Path, n_episodes: usize, seed: u64) -> Result<ReturnStats, TrainerError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let cfg = load_run_config(dir)?;
    let models = load_models(&cfg, dir)?;
    let genome = read_genome(&Checkpoint::load(path)?, "genome")?;
    evaluate(&cfg, &models, &genome, n_episodes, seed)
}

/// Writes one binary PPM per step of `rollout` into `out`.
pub fn render_rollout(rollout: &Rollout, out: &Path) -> Result<Vec<PathBuf>, TrainerError> {
    if rollout.initial.rgb.len() != RGB_BYTES {
        return Err(TrainerError::NoPixels);
    }
    fs::create_dir_all(out)?;
    let mut paths = Vec::new();
    for (i, s) in rollout.steps.iter().enumerate() {
        let p = out.join(format!("frame_{:04}.ppm", i + 1));
        fs::write(&p, to_ppm(&s.frame.rgb))?;
        paths.push(p);
    }
    Ok(paths)
}
