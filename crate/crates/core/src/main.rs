//! `clothwm` command-line interface.
//!
//! Every subcommand is a thin wrapper over `clothwm::trainer`. Failures are
//! reported on stderr as a single line `error code=<code> message=<text>`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use clothwm::trainer::config::parse_pairs;
use clothwm::trainer::{self, Preset, ResolvedConfig, Rollout, RolloutBuffer, TrainerError};

/// Environment variable naming the default root for run directories.
const RUN_ROOT_VAR: &str = "CLOTHWM_RUN_ROOT";

#[derive(Parser)]
#[command(name = "clothwm", version, about = "World-model training for cloth folding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Preset providing the defaults (desk or paper).
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Config file of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Record random-action rollouts.
    Collect {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of rollouts (defaults to schedule.initial_random_rollouts).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run (or resume) one variant's full schedule.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        variant: Option<u8>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved genome in the simulator.
    Eval {
        #[arg(long)]
        genome: PathBuf,
        #[arg(long, default_value_t = 4)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run all seven variants.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a recorded rollout's frames as PPM images.
    Render {
        #[arg(long)]
        rollout: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge run directories into a comparison CSV and summary.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Where to write the merged CSV (stdout if omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

impl ConfigArgs {
    fn resolve(&self, extra: &[(String, String)]) -> Result<(Preset, Vec<(String, String)>, Vec<(String, String)>)> {
        let preset = Preset::parse(&self.preset).with_context(|| format!("unknown preset `{}`", self.preset))?;
        let file = match &self.config {
            Some(p) => parse_pairs(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => Vec::new(),
        };
        let mut overrides = Vec::new();
        if let Some(s) = self.seed {
            overrides.push(("run.seed".to_string(), s.to_string()));
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got `{kv}`") };
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        overrides.extend_from_slice(extra);
        Ok((preset, file, overrides))
    }

    fn resolved(&self, extra: &[(String, String)]) -> Result<ResolvedConfig> {
        let (preset, file, overrides) = self.resolve(extra)?;
        Ok(ResolvedConfig::resolve(preset, &file, &overrides)?)
    }
}

fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn default_out(name: String) -> PathBuf {
    run_root().join(name)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect { cfg, n, out } => {
            let rc = cfg.resolved(&[])?;
            let out = out.unwrap_or_else(|| default_out(format!("collect-seed{}", rc.config.seed)));
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.txt"), rc.to_text())?;
            let mut buffer = RolloutBuffer::open(&out.join("rollouts"))?;
            let n = n.unwrap_or(rc.config.schedule.initial_random_rollouts);
            let seed = trainer::derive_seed(rc.config.seed, "initial", &[]);
            let ids = trainer::collect_random(&rc.config, &mut buffer, n, seed)?;
            println!("collected {} rollouts into {}", ids.len(), buffer.dir().display());
        }
        Command::Train { cfg, variant, out } => {
            let extra: Vec<_> = variant.map(|v| ("run.variant".to_string(), v.to_string())).into_iter().collect();
            let rc = cfg.resolved(&extra)?;
            let c = &rc.config;
            let out = out.unwrap_or_else(|| default_out(format!("{}-seed{}", trainer::variant_dir_name(c.variant), c.seed)));
            let m = trainer::run_experiment(&rc, &out)?;
            println!(
                "variant {} ({}): best-so-far {:.6} after {} evaluations; run directory {}",
                c.variant,
                c.variant.label(),
                m.best_so_far().unwrap_or(f64::NAN),
                m.evaluations(),
                out.display()
            );
        }
        Command::Eval { genome, episodes, seed } => {
            let stats = trainer::evaluate_genome_file(&genome, episodes, seed)?;
            let (lo, hi) = stats.ci95();
            println!("mean_return={:.6} std={:.6} ci95=[{lo:.6},{hi:.6}] episodes={episodes}", stats.mean, stats.std);
        }
        Command::Ablate { cfg, out } => {
            let (preset, file, overrides) = cfg.resolve(&[])?;
            let seed = ResolvedConfig::resolve(preset, &file, &overrides)?.config.seed;
            let root = out.unwrap_or_else(|| default_out(format!("ablate-{}-seed{seed}", preset.name())));
            for dir in trainer::ablate(preset, &file, &overrides, &root)? {
                println!("{}", dir.display());
            }
        }
        Command::Render { rollout, out } => {
            let bytes = fs::read(&rollout).with_context(|| format!("reading {}", rollout.display()))?;
            let r = Rollout::from_bytes(&bytes)?;
            let frames = trainer::render_rollout(&r, &out)?;
            println!("wrote {} frames to {}", frames.len(), out.display());
        }
        Command::Report { runs, csv } => {
            let rep = trainer::report(&runs)?;
            match csv {
                Some(p) => fs::write(&p, &rep.csv)?,
                None => print!("{}", rep.csv),
            }
            print!("{}", rep.summary);
        }
    }
    Ok(())
}

fn error_code(e: &anyhow::Error) -> &'static str {
    if let Some(t) = e.downcast_ref::<TrainerError>() {
        return t.code();
    }
    if e.downcast_ref::<trainer::ConfigError>().is_some() {
        return "config";
    }
    if e.downcast_ref::<trainer::RolloutError>().is_some() {
        return "rollout";
    }
    if e.downcast_ref::<std::io::Error>().is_some() || e.chain().any(|c| c.is::<std::io::Error>()) {
        return "io";
    }
    "bad-arguments"
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error code=bad-arguments message={}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error code={} message={}", error_code(&e), one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn messages_collapse_to_one_line() {
        assert_eq!(one_line("a\n  b\tc"), "a b c");
    }
}
