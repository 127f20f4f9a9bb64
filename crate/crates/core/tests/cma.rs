mod common;

use clothwm::cma::*;
use clothwm::nn::Checkpoint;
use common::oracles::jacobi_eigenvalues;
use proptest::prelude::*;

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum()
}

fn ellipsoid(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(i, v)| 10f64.powf(i as f64 / 2.0) * v * v).sum()
}

fn run(st: &mut CmaState, f: impl Fn(&[f64]) -> f64, gens: usize) {
    for _ in 0..gens {
        let xs = st.ask().unwrap();
        let fs: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        st.tell(&xs, &fs).unwrap();
    }
}

#[test]
fn sphere_converges_on_three_seeds() {
    for seed in [1, 2, 3] {
        let r = minimize(CmaConfig::new(10, 1.0, seed), &[2.0; 10], sphere, 5000, 1e-10).unwrap();
        assert!(r.fitness < 1e-10, "seed {seed}: {} after {}", r.fitness, r.evaluations);
        assert!(r.evaluations <= 5000);
    }
}

#[test]
fn rosenbrock_converges_on_three_seeds() {
    for seed in [1, 2, 3] {
        let r = minimize(CmaConfig::new(5, 0.3, seed), &[0.0; 5], rosenbrock, 30000, 1e-6).unwrap();
        assert!(r.fitness < 1e-6, "seed {seed}: {} after {}", r.fitness, r.evaluations);
    }
}

#[test]
fn vanishing_step_size_collapses_candidates_onto_mean() {
    let m = [0.3, -1.2, 4.0];
    let st = CmaState::new(CmaConfig::new(3, 1e-300, 0), &m).unwrap();
    for x in st.ask().unwrap() {
        assert_eq!(x, m);
    }
}

#[test]
fn identity_covariance_marginals_are_normal() {
    let mut cfg = CmaConfig::new(2, 0.5, 11);
    cfg.population = 10_000;
    let st = CmaState::new(cfg, &[1.0, -2.0]).unwrap();
    let xs = st.ask().unwrap();
    for (j, m) in [1.0, -2.0].iter().enumerate() {
        let z: Vec<f64> = xs.iter().map(|x| (x[j] - m) / 0.5).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let within1 = z.iter().filter(|v| v.abs() < 1.0).count() as f64 / n;
        let within2 = z.iter().filter(|v| v.abs() < 2.0).count() as f64 / n;
        assert!(mean.abs() < 0.04, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
        assert!((within1 - 0.6827).abs() < 0.02, "{within1}");
        assert!((within2 - 0.9545).abs() < 0.01, "{within2}");
    }
}

#[test]
fn ask_is_reproducible() {
    let a = CmaState::new(CmaConfig::new(4, 1.0, 5), &[0.0; 4]).unwrap();
    let b = CmaState::new(CmaConfig::new(4, 1.0, 5), &[0.0; 4]).unwrap();
    assert_eq!(a.ask().unwrap(), a.ask().unwrap());
    assert_eq!(a.ask().unwrap(), b.ask().unwrap());
    let c = CmaState::new(CmaConfig::new(4, 1.0, 6), &[0.0; 4]).unwrap();
    assert_ne!(a.ask().unwrap(), c.ask().unwrap());
}

#[test]
fn identical_candidates_leave_mean_unchanged() {
    let m = vec![0.5, 1.5, -0.5];
    let mut st = CmaState::new(CmaConfig::new(3, 1.0, 0), &m).unwrap();
    let pop = st.config().population;
    st.tell(&vec![m.clone(); pop], &(0..pop).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
    assert_eq!(st.mean(), m.as_slice());
}

#[test]
fn degenerate_weighting_moves_mean_to_best() {
    let mut cfg = CmaConfig::new(3, 1.0, 0);
    cfg.weights = Some(vec![1.0]);
    let mut st = CmaState::new(cfg, &[0.0; 3]).unwrap();
    let xs = st.ask().unwrap();
    let fs: Vec<f64> = xs.iter().map(|x| sphere(x)).collect();
    st.tell(&xs, &fs).unwrap();
    let best = fs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    for (a, b) in st.mean().iter().zip(&xs[best]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn configuration_invariants() {
    for pop in [2, 3, 7, 10, 100] {
        let mut cfg = CmaConfig::new(10, 1.0, 0);
        cfg.population = pop;
        cfg.validate().unwrap();
        let w = cfg.resolved_weights();
        assert_eq!(w.len(), pop.div_ceil(2));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v > 0.0));
        assert!(w.windows(2).all(|p| p[1] < p[0]));
    }
    let mut cfg = CmaConfig::new(867, 0.1, 0);
    cfg.population = 3;
    assert_eq!(cfg.mu(), 2);
    let mut bad = CmaConfig::new(3, 1.0, 0);
    bad.weights = Some(vec![0.2, 0.8]);
    assert!(matches!(bad.validate(), Err(CmaError::InvalidConfig(_))));
    bad.weights = None;
    bad.population = 1;
    assert!(bad.validate().is_err());
}

#[test]
fn tell_rejects_bad_input() {
    let mut st = CmaState::new(CmaConfig::new(3, 1.0, 0), &[0.0; 3]).unwrap();
    let xs = st.ask().unwrap();
    let mut fs = vec![1.0; xs.len()];
    assert!(matches!(st.tell(&xs, &fs[1..]), Err(CmaError::LengthMismatch { .. })));
    assert!(matches!(st.tell(&xs[1..], &fs[1..]), Err(CmaError::LengthMismatch { .. })));
    fs[2] = f64::NAN;
    assert!(matches!(st.tell(&xs, &fs), Err(CmaError::NonFiniteFitness(2))));
    assert_eq!(st.generation(), 0);
    assert!(matches!(st.best_so_far(), Err(CmaError::EmptyHistory)));
}

#[test]
fn collapsed_covariance_is_reported() {
    let mut cfg = CmaConfig::new(2, 1.0, 0);
    cfg.rates = Some(LearningRates { c_sigma: 0.3, d_sigma: 1.0, c_c: 0.5, c_1: 0.0, c_mu: 1.0 });
    let mut st = CmaState::new(cfg, &[0.0; 2]).unwrap();
    let pop = st.config().population;
    st.tell(&vec![vec![0.0; 2]; pop], &vec![0.0; pop]).unwrap();
    assert!(matches!(st.ask(), Err(CmaError::DegenerateCovariance(_))));
}

#[test]
fn best_so_far_tracks_the_elite() {
    let mut st = CmaState::new(CmaConfig::new(4, 1.0, 3), &[1.0; 4]).unwrap();
    let xs = st.ask().unwrap();
    let fs: Vec<f64> = xs.iter().map(|x| sphere(x)).collect();
    st.tell(&xs, &fs).unwrap();
    let (bx, bf) = st.best_so_far().unwrap();
    let i = fs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(bx, xs[i].as_slice());
    assert_eq!(bf, fs[i]);
    run(&mut st, sphere, 30);
    assert!(st.best_trace().windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(st.best_trace().len(), 31);
}

#[test]
fn elitism_injects_best_as_first_candidate() {
    let mut cfg = CmaConfig::new(5, 1.0, 8);
    cfg.elitism = true;
    cfg.population = 3;
    let mut st = CmaState::new(cfg, &[1.0; 5]).unwrap();
    for _ in 0..20 {
        let xs = st.ask().unwrap();
        if let Ok((b, _)) = st.best_so_far() {
            assert_eq!(xs[0], b);
        }
        let fs: Vec<f64> = xs.iter().map(|x| sphere(x)).collect();
        st.tell(&xs, &fs).unwrap();
    }
    assert!(st.best_trace().windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn covariance_stays_symmetric_positive_definite_and_matches_oracle() {
    let mut st = CmaState::new(CmaConfig::new(6, 0.5, 2), &[1.0; 6]).unwrap();
    for _ in 0..60 {
        run(&mut st, ellipsoid, 1);
        let c = st.covariance();
        for i in 0..6 {
            for j in 0..6 {
                assert!((c[(i, j)] - c[(j, i)]).abs() < 1e-9);
            }
        }
        assert!(st.eigenvalues().iter().all(|&e| e > 0.0));
    }
    let c = st.covariance();
    let rows: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| c[(i, j)]).collect()).collect();
    let oracle = jacobi_eigenvalues(rows);
    let mut mine = st.eigenvalues();
    mine.sort_by(f64::total_cmp);
    let scale = oracle.iter().cloned().fold(0.0, f64::max);
    for (a, b) in mine.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-9 * scale, "{mine:?} vs {oracle:?}");
    }
}

#[test]
fn checkpoint_resume_is_exact() {
    let mut cfg = CmaConfig::new(7, 0.7, 4);
    cfg.elitism = true;
    let mut st = CmaState::new(cfg, &[0.5; 7]).unwrap();
    run(&mut st, rosenbrock, 8);
    let mut ck = Checkpoint::new();
    st.write_checkpoint(&mut ck, "cma.");
    let bytes = ck.to_bytes();
    let back = Checkpoint::read_from(&bytes[..]).unwrap();
    let mut resumed = CmaState::read_checkpoint(&back, "cma.").unwrap();
    let mut ck2 = Checkpoint::new();
    resumed.write_checkpoint(&mut ck2, "cma.");
    assert_eq!(ck2.to_bytes(), bytes);
    run(&mut st, rosenbrock, 8);
    run(&mut resumed, rosenbrock, 8);
    assert_eq!(st.mean(), resumed.mean());
    assert_eq!(st.sigma(), resumed.sigma());
    assert_eq!(st.best_trace(), resumed.best_trace());
    assert!(CmaState::read_checkpoint(&Checkpoint::new(), "cma.").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn monotone_fitness_transform_is_invisible(seed in 0u64..1000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let mut plain = CmaState::new(CmaConfig::new(4, 0.8, seed), &[1.0, -1.0, 0.5, 2.0]).unwrap();
        let mut warped = plain.clone();
        run(&mut plain, rosenbrock, 15);
        run(&mut warped, |x| a * rosenbrock(x).ln_1p() + b, 15);
        prop_assert_eq!(plain.mean(), warped.mean());
        prop_assert_eq!(plain.sigma(), warped.sigma());
        prop_assert_eq!(plain.best_so_far().unwrap().0, warped.best_so_far().unwrap().0);
    }

    #[test]
    fn translation_equivariance(seed in 0u64..1000, t in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let m0 = [0.4, -0.2, 0.9];
        let shifted_m0: Vec<f64> = m0.iter().zip(&t).map(|(a, b)| a + b).collect();
        let mut base = CmaState::new(CmaConfig::new(3, 0.5, seed), &m0).unwrap();
        let mut moved = CmaState::new(CmaConfig::new(3, 0.5, seed), &shifted_m0).unwrap();
        let tt = t.clone();
        run(&mut base, ellipsoid, 12);
        run(&mut moved, move |x| {
            let y: Vec<f64> = x.iter().zip(&tt).map(|(a, b)| a - b).collect();
            ellipsoid(&y)
        }, 12);
        for ((a, b), s) in base.mean().iter().zip(moved.mean()).zip(&t) {
            prop_assert!((a + s - b).abs() < 1e-8, "{} vs {}", a + s, b);
        }
        prop_assert!((base.sigma() - moved.sigma()).abs() < 1e-8 * base.sigma());
    }
}
