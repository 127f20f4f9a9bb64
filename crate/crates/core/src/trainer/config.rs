//! Experiment configuration: flat `section.key=value` text.
//!
//! Resolution order is preset defaults, then a config file, then explicit
//! overrides. `run.preset` itself may come from either layer and selects the
//! defaults. The source that set each key is kept for the run record.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::env::{EnvConfig, GripperMode};
use crate::vae::VaeArch;

use super::variant::Variant;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Preset::Desk),
            "paper" => Some(Preset::Paper),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Default,
    File,
    Override,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Override => "override",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub initial_random_rollouts: usize,
    pub system_iterations: usize,
    pub generations_per_iteration: usize,
    pub replay_rollouts: usize,
    pub ablation_generations: usize,
    pub rollouts_per_candidate: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaSettings {
    pub population: usize,
    pub elite_fraction: f64,
    pub sigma0: f64,
    pub elitism: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeSettings {
    /// `desk` or `canonical` layer widths.
    pub arch: String,
    pub latent: usize,
    pub beta: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Frames drawn per epoch (0 = every pooled frame).
    pub frames_per_epoch: usize,
    /// Most frames held in memory for fitting.
    pub frame_pool: usize,
}

impl VaeSettings {
    pub fn arch(&self) -> VaeArch {
        let mut a = if self.arch == "canonical" { VaeArch::canonical() } else { VaeArch::desk() };
        a.latent = self.latent;
        a.beta = self.beta;
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdnSettings {
    pub hidden: usize,
    pub components: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub variant: Variant,
    pub seed: u64,
    /// Worker threads for fitness evaluation (0 = all cores).
    pub threads: usize,
    pub record_wall_clock: bool,
    /// Re-initialise the VAE and MDN-RNN before every fit instead of fine-tuning.
    pub from_scratch: bool,
    pub schedule: Schedule,
    pub cma: CmaSettings,
    pub env: EnvConfig,
    pub vae: VaeSettings,
    pub mdn: MdnSettings,
}

/// Every key, in canonical order.
pub const KEYS: &[&str] = &[
    "run.preset",
    "run.variant",
    "run.seed",
    "run.threads",
    "run.record_wall_clock",
    "run.from_scratch",
    "schedule.initial_random_rollouts",
    "schedule.system_iterations",
    "schedule.generations_per_iteration",
    "schedule.replay_rollouts",
    "schedule.ablation_generations",
    "schedule.rollouts_per_candidate",
    "cma.population",
    "cma.elite_fraction",
    "cma.sigma0",
    "cma.elitism",
    "env.cols",
    "env.rows",
    "env.horizon",
    "env.gripper_mode",
    "env.max_step",
    "vae.arch",
    "vae.latent",
    "vae.beta",
    "vae.epochs",
    "vae.batch",
    "vae.lr",
    "vae.frames_per_epoch",
    "vae.frame_pool",
    "mdn.hidden",
    "mdn.components",
    "mdn.epochs",
    "mdn.batch",
    "mdn.lr",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: v.into(),
        reason: "not a number of the expected type".into(),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::BadValue { key: key.into(), value: v.into(), reason: "expected true or false".into() }),
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Paper => Self {
                preset,
                variant: Variant::new(1).unwrap(),
                seed: 0,
                threads: 0,
                record_wall_clock: false,
                from_scratch: false,
                schedule: Schedule {
                    initial_random_rollouts: 1500,
                    system_iterations: 20,
                    generations_per_iteration: 10,
                    replay_rollouts: 50,
                    ablation_generations: 40,
                    rollouts_per_candidate: 4,
                },
                cma: CmaSettings { population: 3, elite_fraction: 0.5, sigma0: 0.5, elitism: true },
                env: EnvConfig::paper(),
                vae: VaeSettings {
                    arch: "canonical".into(),
                    latent: 32,
                    beta: 1.0,
                    epochs: 10,
                    batch: 32,
                    lr: 1e-3,
                    frames_per_epoch: 0,
                    frame_pool: 20_000,
                },
                mdn: MdnSettings { hidden: 256, components: 5, epochs: 20, batch: 16, lr: 1e-3 },
            },
            Preset::Desk => {
                let paper = Self::preset(Preset::Paper);
                Self {
                    preset,
                    schedule: Schedule {
                        initial_random_rollouts: 50,
                        system_iterations: 3,
                        ..paper.schedule
                    },
                    env: EnvConfig::desk(),
                    vae: VaeSettings {
                        arch: "desk".into(),
                        epochs: 3,
                        frames_per_epoch: 512,
                        ..paper.vae
                    },
                    mdn: MdnSettings { epochs: 5, ..paper.mdn },
                    ..paper
                }
            }
        }
    }

    pub fn get(&self, key: &str) -> Result<String, ConfigError> {
        let s = &self.schedule;
        Ok(match key {
            "run.preset" => self.preset.name().into(),
            "run.variant" => self.variant.to_string(),
            "run.seed" => self.seed.to_string(),
            "run.threads" => self.threads.to_string(),
            "run.record_wall_clock" => self.record_wall_clock.to_string(),
            "run.from_scratch" => self.from_scratch.to_string(),
            "schedule.initial_random_rollouts" => s.initial_random_rollouts.to_string(),
            "schedule.system_iterations" => s.system_iterations.to_string(),
            "schedule.generations_per_iteration" => s.generations_per_iteration.to_string(),
            "schedule.replay_rollouts" => s.replay_rollouts.to_string(),
            "schedule.ablation_generations" => s.ablation_generations.to_string(),
            "schedule.rollouts_per_candidate" => s.rollouts_per_candidate.to_string(),
            "cma.population" => self.cma.population.to_string(),
            "cma.elite_fraction" => format!("{:?}", self.cma.elite_fraction),
            "cma.sigma0" => format!("{:?}", self.cma.sigma0),
            "cma.elitism" => self.cma.elitism.to_string(),
            "env.cols" => self.env.cols.to_string(),
            "env.rows" => self.env.rows.to_string(),
            "env.horizon" => self.env.horizon.to_string(),
            "env.gripper_mode" => match self.env.gripper_mode {
                GripperMode::Scripted => "scripted".into(),
                GripperMode::Dual => "dual".into(),
            },
            "env.max_step" => format!("{:?}", self.env.max_step),
            "vae.arch" => self.vae.arch.clone(),
            "vae.latent" => self.vae.latent.to_string(),
            "vae.beta" => format!("{:?}", self.vae.beta),
            "vae.epochs" => self.vae.epochs.to_string(),
            "vae.batch" => self.vae.batch.to_string(),
            "vae.lr" => format!("{:?}", self.vae.lr),
            "vae.frames_per_epoch" => self.vae.frames_per_epoch.to_string(),
            "vae.frame_pool" => self.vae.frame_pool.to_string(),
            "mdn.hidden" => self.mdn.hidden.to_string(),
            "mdn.components" => self.mdn.components.to_string(),
            "mdn.epochs" => self.mdn.epochs.to_string(),
            "mdn.batch" => self.mdn.batch.to_string(),
            "mdn.lr" => format!("{:?}", self.mdn.lr),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        })
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue { key: key.into(), value: v.into(), reason: reason.into() };
        let s = &mut self.schedule;
        match key {
            "run.preset" => self.preset = Preset::parse(v).ok_or_else(|| bad("expected desk or paper"))?,
            "run.variant" => {
                self.variant = Variant::new(parse_num(key, v)?).ok_or_else(|| bad("variant must be 1..7"))?
            }
            "run.seed" => self.seed = parse_num(key, v)?,
            "run.threads" => self.threads = parse_num(key, v)?,
            "run.record_wall_clock" => self.record_wall_clock = parse_bool(key, v)?,
            "run.from_scratch" => self.from_scratch = parse_bool(key, v)?,
            "schedule.initial_random_rollouts" => s.initial_random_rollouts = parse_num(key, v)?,
            "schedule.system_iterations" => s.system_iterations = parse_num(key, v)?,
            "schedule.generations_per_iteration" => s.generations_per_iteration = parse_num(key, v)?,
            "schedule.replay_rollouts" => s.replay_rollouts = parse_num(key, v)?,
            "schedule.ablation_generations" => s.ablation_generations = parse_num(key, v)?,
            "schedule.rollouts_per_candidate" => s.rollouts_per_candidate = parse_num(key, v)?,
            "cma.population" => self.cma.population = parse_num(key, v)?,
            "cma.elite_fraction" => self.cma.elite_fraction = parse_num(key, v)?,
            "cma.sigma0" => self.cma.sigma0 = parse_num(key, v)?,
            "cma.elitism" => self.cma.elitism = parse_bool(key, v)?,
            "env.cols" => self.env.cols = parse_num(key, v)?,
            "env.rows" => self.env.rows = parse_num(key, v)?,
            "env.horizon" => self.env.horizon = parse_num(key, v)?,
            "env.gripper_mode" => {
                self.env.gripper_mode = match v {
                    "scripted" => GripperMode::Scripted,
                    "dual" => GripperMode::Dual,
                    _ => return Err(bad("expected scripted or dual")),
                }
            }
            "env.max_step" => self.env.max_step = parse_num(key, v)?,
            "vae.arch" => {
                if v != "desk" && v != "canonical" {
                    return Err(bad("expected desk or canonical"));
                }
                self.vae.arch = v.into()
            }
            "vae.latent" => self.vae.latent = parse_num(key, v)?,
            "vae.beta" => self.vae.beta = parse_num(key, v)?,
            "vae.epochs" => self.vae.epochs = parse_num(key, v)?,
            "vae.batch" => self.vae.batch = parse_num(key, v)?,
            "vae.lr" => self.vae.lr = parse_num(key, v)?,
            "vae.frames_per_epoch" => self.vae.frames_per_epoch = parse_num(key, v)?,
            "vae.frame_pool" => self.vae.frame_pool = parse_num(key, v)?,
            "mdn.hidden" => self.mdn.hidden = parse_num(key, v)?,
            "mdn.components" => self.mdn.components = parse_num(key, v)?,
            "mdn.epochs" => self.mdn.epochs = parse_num(key, v)?,
            "mdn.batch" => self.mdn.batch = parse_num(key, v)?,
            "mdn.lr" => self.mdn.lr = parse_num(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Checks that every count is positive and the pieces fit together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("schedule.system_iterations", self.schedule.system_iterations),
            ("schedule.generations_per_iteration", self.schedule.generations_per_iteration),
            ("schedule.ablation_generations", self.schedule.ablation_generations),
            ("schedule.rollouts_per_candidate", self.schedule.rollouts_per_candidate),
            ("cma.population", self.cma.population),
            ("env.horizon", self.env.horizon),
            ("vae.latent", self.vae.latent),
            ("vae.epochs", self.vae.epochs),
            ("vae.batch", self.vae.batch),
            ("vae.frame_pool", self.vae.frame_pool),
            ("mdn.hidden", self.mdn.hidden),
            ("mdn.components", self.mdn.components),
            ("mdn.epochs", self.mdn.epochs),
            ("mdn.batch", self.mdn.batch),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(ConfigError::BadValue { key: k.into(), value: "0".into(), reason: "must be positive".into() });
            }
        }
        let needs_data = self.variant.uses_vae() || self.variant.dynamics() == super::Dynamics::Trained;
        if needs_data && self.schedule.initial_random_rollouts == 0 {
            return Err(ConfigError::BadValue {
                key: "schedule.initial_random_rollouts".into(),
                value: "0".into(),
                reason: "this variant fits models on random rollouts".into(),
            });
        }
        if self.cma.population < 2 {
            return Err(ConfigError::BadValue {
                key: "cma.population".into(),
                value: self.cma.population.to_string(),
                reason: "must be at least 2".into(),
            });
        }
        if self.env.horizon > u16::MAX as usize {
            return Err(ConfigError::BadValue { key: "env.horizon".into(), value: self.env.horizon.to_string(), reason: "too long".into() });
        }
        self.env.validate().map_err(|e| ConfigError::BadValue {
            key: "env.cols".into(),
            value: format!("{}x{}", self.env.cols, self.env.rows),
            reason: e.to_string(),
        })?;
        Ok(())
    }

    /// Canonical `key=value` text, one key per line in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            writeln!(out, "{k}={}", self.get(k).expect("listed key")).unwrap();
        }
        out
    }

    /// Hex SHA-256 of [`ExperimentConfig::to_text`].
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses `key=value` lines. `#` starts a comment; blank lines are ignored.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// A configuration together with the layer that set each key.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub sources: BTreeMap<String, Source>,
}

impl ResolvedConfig {
    /// Applies preset defaults, then `file` pairs, then `overrides`.
    pub fn resolve(default_preset: Preset, file: &[(String, String)], overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        for (k, _) in file.iter().chain(overrides) {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        let mut preset = default_preset;
        for (k, v) in file.iter().chain(overrides) {
            if k == "run.preset" {
                preset = Preset::parse(v).ok_or_else(|| ConfigError::BadValue {
                    key: k.clone(),
                    value: v.clone(),
                    reason: "expected desk or paper".into(),
                })?;
            }
        }
        let mut config = ExperimentConfig::preset(preset);
        let mut sources: BTreeMap<String, Source> = KEYS.iter().map(|k| (k.to_string(), Source::Default)).collect();
        for (layer, src) in [(file, Source::File), (overrides, Source::Override)] {
            for (k, v) in layer {
                config.set(k, v)?;
                sources.insert(k.clone(), src);
            }
        }
        config.validate()?;
        Ok(Self { config, sources })
    }

    /// Canonical text annotated with the winning source of each key. It
    /// parses back to the same configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let src = self.sources.get(*k).copied().unwrap_or(Source::Default);
            writeln!(out, "{k}={}  # {}", self.config.get(k).expect("listed key"), src.name()).unwrap();
        }
        out
    }
}
