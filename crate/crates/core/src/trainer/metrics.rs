//! Run metrics, their CSV files, and the cross-run report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::variant::{Representation, Variant};
use super::TrainerError;

pub const METRICS_HEADER: &str = "generation,evals_cumulative,mean_return,ci95_low,ci95_high,best_so_far,wall_clock_s";
pub const LOSSES_HEADER: &str = "iteration,model,epoch,train_loss,heldout_loss";

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRow {
    pub generation: usize,
    pub evals_cumulative: u64,
    pub mean_return: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub best_so_far: f64,
    pub wall_clock_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    pub iteration: usize,
    pub model: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub generations: Vec<GenerationRow>,
    pub losses: Vec<LossRow>,
}

impl RunMetrics {
    pub fn best_so_far(&self) -> Option<f64> {
        self.generations.last().map(|g| g.best_so_far)
    }

    pub fn evaluations(&self) -> u64 {
        self.generations.last().map_or(0, |g| g.evals_cumulative)
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for g in &self.generations {
            let wc = g.wall_clock_s.map(|w| format!("{w:.3}")).unwrap_or_default();
            writeln!(
                s,
                "{},{},{:.9},{:.9},{:.9},{:.9},{}",
                g.generation, g.evals_cumulative, g.mean_return, g.ci95_low, g.ci95_high, g.best_so_far, wc
            )
            .unwrap();
        }
        s
    }

    pub fn losses_csv(&self) -> String {
        let mut s = format!("{LOSSES_HEADER}\n");
        for l in &self.losses {
            writeln!(s, "{},{},{},{:.9},{:.9}", l.iteration, l.model, l.epoch, l.train_loss, l.heldout_loss).unwrap();
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), TrainerError> {
        write_atomic(&dir.join("metrics.csv"), self.metrics_csv().as_bytes())?;
        write_atomic(&dir.join("losses.csv"), self.losses_csv().as_bytes())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, TrainerError> {
        let path = dir.join("metrics.csv");
        let text = fs::read_to_string(&path).map_err(|_| TrainerError::MissingMetrics(path.clone()))?;
        let generations = parse_metrics(&text).ok_or_else(|| TrainerError::Corrupt(path.display().to_string()))?;
        let lpath = dir.join("losses.csv");
        let losses = match fs::read_to_string(&lpath) {
            Ok(t) => parse_losses(&t).ok_or_else(|| TrainerError::Corrupt(lpath.display().to_string()))?,
            Err(_) => Vec::new(),
        };
        Ok(Self { generations, losses })
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TrainerError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn parse_metrics(text: &str) -> Option<Vec<GenerationRow>> {
    let mut lines = text.lines();
    if lines.next()? != METRICS_HEADER {
        return None;
    }
    lines
        .map(|l| {
            let p: Vec<&str> = l.split(',').collect();
            if p.len() != 7 {
                return None;
            }
            Some(GenerationRow {
                generation: p[0].parse().ok()?,
                evals_cumulative: p[1].parse().ok()?,
                mean_return: p[2].parse().ok()?,
                ci95_low: p[3].parse().ok()?,
                ci95_high: p[4].parse().ok()?,
                best_so_far: p[5].parse().ok()?,
                wall_clock_s: if p[6].is_empty() { None } else { Some(p[6].parse().ok()?) },
            })
        })
        .collect()
}

fn parse_losses(text: &str) -> Option<Vec<LossRow>> {
    let mut lines = text.lines();
    if lines.next()? != LOSSES_HEADER {
        return None;
    }
    lines
        .map(|l| {
            let p: Vec<&str> = l.split(',').collect();
            if p.len() != 5 {
                return None;
            }
            Some(LossRow {
                iteration: p[0].parse().ok()?,
                model: p[1].to_string(),
                epoch: p[2].parse().ok()?,
                train_loss: p[3].parse().ok()?,
                heldout_loss: p[4].parse().ok()?,
            })
        })
        .collect()
}

/// One run as seen by the report.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub variant: Variant,
    pub seed: u64,
    pub metrics: RunMetrics,
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<Self, TrainerError> {
        let manifest = fs::read_to_string(dir.join("manifest.txt")).map_err(|_| TrainerError::MissingMetrics(dir.join("manifest.txt")))?;
        let field = |k: &str| manifest.lines().find_map(|l| l.strip_prefix(&format!("{k}="))).map(str::to_string);
        let variant = field("variant")
            .and_then(|v| v.parse().ok())
            .and_then(Variant::new)
            .ok_or_else(|| TrainerError::Corrupt(format!("{}: variant", dir.display())))?;
        let seed = field("seed").and_then(|v| v.parse().ok()).unwrap_or(0);
        let metrics = RunMetrics::read(dir)?;
        if metrics.generations.is_empty() {
            return Err(TrainerError::MissingMetrics(dir.join("metrics.csv")));
        }
        Ok(Self { dir: dir.to_path_buf(), variant, seed, metrics })
    }

    /// Best-so-far return once at most `evals` evaluations were spent.
    pub fn best_at(&self, evals: u64) -> Option<f64> {
        self.metrics.generations.iter().take_while(|g| g.evals_cumulative <= evals).last().map(|g| g.best_so_far)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    /// `variant,label,seed,generation,evals_cumulative,best_so_far`
    pub csv: String,
    pub summary: String,
    /// `(best keypoint - best RGB) / |best RGB|` at the common budget.
    pub keypoint_gain: Option<f64>,
}

pub fn report(dirs: &[PathBuf]) -> Result<Report, TrainerError> {
    if dirs.is_empty() {
        return Err(TrainerError::MissingMetrics(PathBuf::from("<no run directories>")));
    }
    let runs = dirs.iter().map(|d| RunSummary::load(d)).collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from("variant,label,seed,generation,evals_cumulative,best_so_far\n");
    let mut summary = String::new();
    for r in &runs {
        for g in &r.metrics.generations {
            writeln!(csv, "{},{},{},{},{},{:.9}", r.variant, r.variant.label(), r.seed, g.generation, g.evals_cumulative, g.best_so_far).unwrap();
        }
        writeln!(
            summary,
            "variant {} ({}) seed {}: best-so-far {:.6} after {} evaluations",
            r.variant,
            r.variant.label(),
            r.seed,
            r.metrics.best_so_far().unwrap(),
            r.metrics.evaluations()
        )
        .unwrap();
    }
    let budget = runs.iter().map(|r| r.metrics.evaluations()).min().unwrap_or(0);
    let best = |kp: bool| {
        runs.iter()
            .filter(|r| (r.variant.representation() == Representation::Keypoint) == kp)
            .filter_map(|r| r.best_at(budget))
            .reduce(f64::max)
    };
    let keypoint_gain = match (best(true), best(false)) {
        (Some(k), Some(rgb)) if rgb != 0.0 => Some((k - rgb) / rgb.abs()),
        _ => None,
    };
    if let Some(g) = keypoint_gain {
        writeln!(summary, "best keypoint vs best RGB at {budget} evaluations: {:+.1}%", 100.0 * g).unwrap();
    }
    Ok(Report { runs, csv, summary, keypoint_gain })
}
