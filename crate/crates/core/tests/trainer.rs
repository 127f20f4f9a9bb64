mod common;

use std::fs;

use clothwm::cma::CmaState;
use clothwm::nn::Checkpoint;
use clothwm::policy::read_genome;
use clothwm::trainer::episode::policy_spec;
use clothwm::trainer::*;
use common::samples::random_rollout;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn desk(variant: u8, seed: u64, extra: &[(&str, &str)]) -> ResolvedConfig {
    let mut ov = vec![("run.variant".to_string(), variant.to_string()), ("run.seed".to_string(), seed.to_string())];
    ov.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    ResolvedConfig::resolve(Preset::Desk, &[], &ov).unwrap()
}

/// A small schedule that still exercises every stage.
fn tiny(variant: u8, seed: u64) -> ResolvedConfig {
    desk(
        variant,
        seed,
        &[
            ("schedule.initial_random_rollouts", "6"),
            ("schedule.system_iterations", "2"),
            ("schedule.generations_per_iteration", "2"),
            ("schedule.ablation_generations", "3"),
            ("schedule.replay_rollouts", "4"),
            ("schedule.rollouts_per_candidate", "2"),
            ("env.horizon", "8"),
            ("vae.epochs", "1"),
            ("vae.frames_per_epoch", "32"),
            ("mdn.epochs", "1"),
            ("mdn.hidden", "16"),
        ],
    )
}

#[test]
fn rollout_files_round_trip_byte_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let r = random_rollout(&mut rng);
        let bytes = r.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"WMRL");
        let back = Rollout::from_bytes(&bytes).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}

#[test]
fn rollout_rejects_damage() {
    let r = random_rollout(&mut ChaCha8Rng::seed_from_u64(1));
    let bytes = r.to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Rollout::from_bytes(&bad).is_err());
    assert!(Rollout::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut long = bytes.clone();
    long.push(0);
    assert!(Rollout::from_bytes(&long).is_err());
}

#[test]
fn buffer_sample_contract() {
    let pool: Vec<usize> = (100..150).collect();
    let all = buffer_sample(&pool, pool.len(), 3).unwrap();
    let mut sorted = all.clone();
    sorted.sort();
    assert_eq!(sorted, pool);
    assert_eq!(buffer_sample(&pool, 20, 9).unwrap(), buffer_sample(&pool, 20, 9).unwrap());
    assert_ne!(buffer_sample(&pool, 20, 9).unwrap(), buffer_sample(&pool, 20, 10).unwrap());
    assert!(matches!(buffer_sample(&pool, 51, 0), Err(TrainerError::InsufficientData { needed: 51, available: 50 })));
}

proptest! {
    #[test]
    fn buffer_sample_never_duplicates(n in 1usize..200, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let pool: Vec<usize> = (0..n).collect();
        let k = (n as f64 * frac) as usize;
        let s = buffer_sample(&pool, k, seed).unwrap();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        prop_assert_eq!(d.len(), k);
    }
}

#[test]
fn random_collection_is_reproducible() {
    let rc = tiny(5, 3);
    let tmp = tempfile::tempdir().unwrap();
    let mut a = RolloutBuffer::open(&tmp.path().join("a")).unwrap();
    let mut b = RolloutBuffer::open(&tmp.path().join("b")).unwrap();
    collect_random(&rc.config, &mut a, 5, 11).unwrap();
    collect_random(&rc.config, &mut b, 5, 11).unwrap();
    assert_eq!(a.len(), 5);
    for e in a.entries() {
        assert_eq!(fs::read(a.dir().join(&e.file)).unwrap(), fs::read(b.dir().join(&e.file)).unwrap());
        let r = a.load(e.id).unwrap();
        assert_eq!(r.steps.len(), 8);
        assert_eq!(r.initial.rgb.len(), 3 * 64 * 64);
        assert!(r.steps.iter().all(|s| s.reward.is_finite()));
    }
    assert_eq!(fs::read(a.dir().join("index.txt")).unwrap(), fs::read(b.dir().join("index.txt")).unwrap());
    let reopened = RolloutBuffer::open(a.dir()).unwrap();
    assert_eq!(reopened.entries(), a.entries());
}

#[test]
fn config_rejects_unknown_keys_and_records_sources() {
    let err = ResolvedConfig::resolve(Preset::Desk, &[], &[("cma.popsize".into(), "4".into())]).unwrap_err();
    assert_eq!(err, ConfigError::UnknownKey("cma.popsize".into()));
    assert!(err.to_string().contains("cma.popsize"));

    let file = config::parse_pairs("# comment\ncma.population=5\nrun.seed = 9\n").unwrap();
    let rc = ResolvedConfig::resolve(Preset::Desk, &file, &[("cma.population".into(), "7".into())]).unwrap();
    assert_eq!(rc.config.cma.population, 7);
    assert_eq!(rc.config.seed, 9);
    assert_eq!(rc.sources["cma.population"], Source::Override);
    assert_eq!(rc.sources["run.seed"], Source::File);
    assert_eq!(rc.sources["env.horizon"], Source::Default);
    let text = rc.to_text();
    assert!(text.contains("cma.population=7"));
    assert!(text.lines().any(|l| l.starts_with("run.seed=9") && l.ends_with("# file")));

    let paper = ResolvedConfig::resolve(Preset::Desk, &[("run.preset".into(), "paper".into())], &[]).unwrap();
    assert_eq!(paper.config.schedule.initial_random_rollouts, 1500);
    assert!(ResolvedConfig::resolve(Preset::Desk, &[], &[("run.variant".into(), "8".into())]).is_err());
    assert!(ResolvedConfig::resolve(Preset::Desk, &[], &[("cma.population".into(), "0".into())]).is_err());
}

#[test]
fn schedule_constants() {
    let p = ExperimentConfig::preset(Preset::Paper);
    let s = &p.schedule;
    assert_eq!(s.initial_random_rollouts, 1500);
    assert_eq!(s.system_iterations, 20);
    assert_eq!(s.replay_rollouts, 50);
    assert_eq!(s.ablation_generations, 40);
    assert_eq!(p.cma.population * s.rollouts_per_candidate, 12);
    assert_eq!(p.cma.population * s.rollouts_per_candidate * s.generations_per_iteration, 120);
    let d = ExperimentConfig::preset(Preset::Desk);
    assert_eq!((d.schedule.initial_random_rollouts, d.env.horizon, d.schedule.system_iterations), (50, 40, 3));
}

#[test]
fn variant_matrix() {
    let all: Vec<Variant> = Variant::all().collect();
    assert_eq!(all.len(), 7);
    assert!(Variant::new(0).is_none() && Variant::new(8).is_none());
    for v in all {
        let id = v.id();
        assert_eq!(v.uses_mdn(), id <= 4, "{v}");
        assert_eq!(v.dynamics() == Dynamics::Untrained, id == 3 || id == 4, "{v}");
        assert_eq!(v.uses_vae(), matches!(id, 1 | 3 | 5), "{v}");
        assert_eq!(v.representation() == Representation::Keypoint, matches!(id, 2 | 4 | 6), "{v}");
        let cfg = desk(id, 0, &[]).config;
        assert_eq!(policy_spec(&cfg).param_count(), match id {
            1 | 3 => 867,
            2 | 4 => 1005,
            5 => 99,
            6 => 237,
            _ => 3107,
        });
    }
    let cfg = desk(6, 0, &[]).config;
    assert_eq!(policy_spec(&cfg).input_dim, 78);
}

#[test]
fn evaluation_is_deterministic() {
    let cfg = tiny(6, 0).config;
    let n = policy_spec(&cfg).param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let genome: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let models = Models::default();
    let a = evaluate(&cfg, &models, &genome, 4, 17).unwrap();
    let b = evaluate(&cfg, &models, &genome, 4, 17).unwrap();
    assert_eq!(a.returns.len(), 4);
    assert_eq!(a, b);
    assert!(matches!(evaluate(&cfg, &models, &genome[1..], 4, 17), Err(TrainerError::Policy(_))));
}

#[test]
fn random_genome_is_near_the_random_baseline() {
    let cfg = desk(6, 0, &[]).config;
    let base = evaluate_random(&cfg, 20, 1).unwrap();
    let n = policy_spec(&cfg).param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut within = 0;
    for _ in 0..5 {
        let genome: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
        let r = evaluate(&cfg, &Models::default(), &genome, 4, 1).unwrap();
        if (r.mean - base.mean).abs() <= 3.0 * base.std.max(1e-9) {
            within += 1;
        }
    }
    assert!(within >= 4, "{within}/5 near-zero genomes within 3 sigma of {:.3} ± {:.3}", base.mean, base.std);
}

fn check_run(dir: &std::path::Path, m: &RunMetrics, total_gens: usize) {
    assert_eq!(m.generations.len(), total_gens);
    for w in m.generations.windows(2) {
        assert!(w[1].best_so_far >= w[0].best_so_far);
        assert!(w[1].evals_cumulative > w[0].evals_cumulative);
    }
    for g in &m.generations {
        assert!(g.ci95_low <= g.mean_return && g.mean_return <= g.ci95_high);
        assert!(g.best_so_far >= g.mean_return - 1e-9 || g.generation > 1);
    }
    assert_eq!(RunMetrics::read(dir).unwrap().metrics_csv(), m.metrics_csv());
    let best = Checkpoint::load(&dir.join("best.ckpt")).unwrap();
    assert!(!read_genome(&best, "genome").unwrap().is_empty());
    assert_eq!(best.get_f64("return").unwrap(), vec![m.best_so_far().unwrap()]);
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config_digest="));
    assert!(dir.join("config.txt").exists());
}

#[test]
fn keypoint_ablation_smoke_run() {
    let rc = tiny(6, 1);
    let tmp = tempfile::tempdir().unwrap();
    let m = run_experiment(&rc, tmp.path()).unwrap();
    check_run(tmp.path(), &m, 3);
    assert_eq!(m.evaluations(), 3 * 3 * 2);
    assert!(m.losses.is_empty());
    assert!(RolloutBuffer::open(&tmp.path().join("rollouts")).unwrap().is_empty());
    assert!(m.generations.iter().all(|g| g.wall_clock_s.is_none()));
}

#[test]
fn full_pipeline_records_and_replays() {
    let rc = tiny(1, 2);
    let tmp = tempfile::tempdir().unwrap();
    let mut exp = Experiment::open(&rc, tmp.path()).unwrap();
    exp.run(None).unwrap();
    let m = exp.metrics().clone();
    check_run(tmp.path(), &m, 4);
    // 6 initial rollouts, then population x episodes x generations per iteration.
    assert_eq!(exp.buffer().len(), 6 + 2 * 3 * 2 * 2);
    assert_eq!(exp.training_set(0).unwrap(), (0..6).collect::<Vec<_>>());
    let set1 = exp.training_set(1).unwrap();
    assert_eq!(set1.len(), 12 + 4);
    assert_eq!(&set1[..12], &(6..18).collect::<Vec<_>>()[..]);
    assert!(set1[12..].iter().all(|&i| i < 6));
    let vae_rows = m.losses.iter().filter(|l| l.model == "vae").count();
    let mdn_rows = m.losses.iter().filter(|l| l.model == "mdn").count();
    assert_eq!((vae_rows, mdn_rows), (2, 2));
    assert!(exp.buffer().entries()[6..].iter().all(|e| e.steps == 8));
    let models = load_models(&rc.config, tmp.path()).unwrap();
    assert!(models.vae.is_some() && models.mdn.is_some());
}

#[test]
fn untrained_dynamics_stay_frozen_and_keypoints_skip_the_vae() {
    let rc = tiny(4, 3);
    let tmp = tempfile::tempdir().unwrap();
    let mut exp = Experiment::open(&rc, tmp.path()).unwrap();
    let before = exp.models().mdn.as_ref().unwrap().store().flat_values();
    assert!(exp.models().vae.is_none());
    exp.run(None).unwrap();
    assert_eq!(exp.models().mdn.as_ref().unwrap().store().flat_values(), before);
    assert!(exp.metrics().losses.is_empty());
    let r = exp.buffer().load(0).unwrap();
    assert!(r.initial.rgb.is_empty());
}

#[test]
fn interrupted_run_resumes_to_identical_outputs() {
    let rc = tiny(2, 4);
    let tmp = tempfile::tempdir().unwrap();
    let whole = tmp.path().join("whole");
    let split = tmp.path().join("split");
    run_experiment(&rc, &whole).unwrap();
    {
        let mut exp = Experiment::open(&rc, &split).unwrap();
        exp.run(Some(3)).unwrap();
        assert_eq!(exp.generations_done(), 3);
    }
    let mut exp = Experiment::open(&rc, &split).unwrap();
    assert_eq!(exp.generations_done(), 3);
    exp.run(None).unwrap();
    for f in ["metrics.csv", "losses.csv", "best.ckpt", "models.ckpt", "rollouts/index.txt"] {
        assert_eq!(fs::read(whole.join(f)).unwrap(), fs::read(split.join(f)).unwrap(), "{f}");
    }
    let a = CmaState::read_checkpoint(&Checkpoint::load(&whole.join("state.ckpt")).unwrap(), "cma.").unwrap();
    let b = CmaState::read_checkpoint(&Checkpoint::load(&split.join("state.ckpt")).unwrap(), "cma.").unwrap();
    assert_eq!(a.mean(), b.mean());

    let other = tiny(2, 5);
    assert!(matches!(Experiment::open(&other, &split), Err(TrainerError::RunMismatch(_))));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_experiment(&tiny(6, 8), &a).unwrap();
    let mut rc = tiny(6, 8);
    rc.config.threads = 3;
    run_experiment(&rc, &b).unwrap();
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(a.join("best.ckpt")).unwrap(), fs::read(b.join("best.ckpt")).unwrap());
}

#[test]
fn report_merges_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_experiment(&tiny(6, 9), &a).unwrap();
    run_experiment(&tiny(6, 9), &b).unwrap();
    let single = report(std::slice::from_ref(&a)).unwrap();
    assert!(single.summary.contains("variant 6 (keypoint)"));
    assert_eq!(single.keypoint_gain, None);
    assert_eq!(single.csv.lines().count(), 1 + 3);
    let pair = report(&[a.clone(), b]).unwrap();
    assert_eq!(pair.runs[0].metrics, pair.runs[1].metrics);
    assert!(matches!(report(&[]), Err(TrainerError::MissingMetrics(_))));
    assert!(matches!(report(&[tmp.path().join("nope")]), Err(TrainerError::MissingMetrics(_))));
}

#[test]
fn report_gain_compares_keypoints_with_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let kp = tmp.path().join("kp");
    let px = tmp.path().join("px");
    run_experiment(&tiny(6, 1), &kp).unwrap();
    run_experiment(&tiny(7, 1), &px).unwrap();
    let r = report(&[kp, px]).unwrap();
    let k = r.runs[0].metrics.best_so_far().unwrap();
    let p = r.runs[1].metrics.best_so_far().unwrap();
    let gain = r.keypoint_gain.unwrap();
    assert!((gain - (k - p) / p.abs()).abs() < 1e-12);
}
