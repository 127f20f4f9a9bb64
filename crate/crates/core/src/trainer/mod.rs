//! Data collection, model fitting, controller evolution and reporting.

use std::path::PathBuf;

use thiserror::Error;

use crate::cma::CmaError;
use crate::env::EnvError;
use crate::nn::NnError;
use crate::policy::PolicyError;

pub mod buffer;
pub mod config;
pub mod episode;
pub mod experiment;
pub mod metrics;
pub mod rollout;
pub mod seeds;
pub mod variant;

pub use buffer::{buffer_sample, BufferEntry, RolloutBuffer};
pub use config::{ConfigError, ExperimentConfig, Preset, ResolvedConfig, Source};
pub use episode::{evaluate, evaluate_random, run_episode, Driver, Episode, Models, ReturnStats};
pub use experiment::{ablate, collect_random, evaluate_genome_file, load_models, load_run_config, render_rollout, run_experiment, variant_dir_name, Experiment};
pub use metrics::{report, GenerationRow, LossRow, Report, RunMetrics, RunSummary};
pub use rollout::{Frame, Rollout, RolloutError, StepRecord};
pub use seeds::derive_seed;
pub use variant::{Dynamics, Representation, Variant};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("env: {0}")]
    Env(#[from] EnvError),
    #[error("nn: {0}")]
    Nn(#[from] NnError),
    #[error("cma: {0}")]
    Cma(#[from] CmaError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("rollout: {0}")]
    Rollout(#[from] RolloutError),
    #[error("insufficient data: needed {needed}, available {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("missing metrics: {0}")]
    MissingMetrics(PathBuf),
    #[error("variant needs a {0} model")]
    MissingModel(&'static str),
    #[error("rollout was recorded without camera frames")]
    NoPixels,
    #[error("corrupt: {0}")]
    Corrupt(String),
    #[error("run directory {0} was created with a different configuration")]
    RunMismatch(PathBuf),
}

impl TrainerError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            TrainerError::Io(_) => "io",
            TrainerError::Config(_) => "config",
            TrainerError::Env(_) => "env",
            TrainerError::Nn(_) => "nn",
            TrainerError::Cma(_) => "cma",
            TrainerError::Policy(_) => "policy",
            TrainerError::Rollout(_) => "rollout",
            TrainerError::InsufficientData { .. } => "insufficient-data",
            TrainerError::MissingMetrics(_) => "missing-metrics",
            TrainerError::MissingModel(_) => "missing-model",
            TrainerError::NoPixels => "no-pixels",
            TrainerError::Corrupt(_) => "corrupt",
            TrainerError::RunMismatch(_) => "run-mismatch",
        }
    }
}
