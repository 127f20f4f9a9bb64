use clothwm::env::{ClothEnv, EnvConfig};
use clothwm::nn::Checkpoint;
use clothwm::vae::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reset_frame() -> Vec<u8> {
    ClothEnv::new(EnvConfig::desk()).unwrap().reset(0).rgb
}

fn tiny() -> Vae {
    Vae::new(VaeArch::desk(), 3).unwrap()
}

#[test]
fn architectures_are_consistent() {
    VaeArch::canonical().validate().unwrap();
    VaeArch::desk().validate().unwrap();
    VaeArch::miniature().validate().unwrap();
    let mut bad = VaeArch::desk();
    bad.decoder.pop();
    assert!(bad.validate().is_err());
}

#[test]
fn deterministic_encode_is_repeatable_and_returns_mean() {
    let vae = tiny();
    let f = reset_frame();
    let a = vae.encode(&f, true, 0).unwrap();
    let b = vae.encode(&f, true, 99).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.z, a.mu);
}

#[test]
fn stochastic_encode_is_seeded() {
    let vae = tiny();
    let f = reset_frame();
    let a = vae.encode(&f, false, 7).unwrap();
    let b = vae.encode(&f, false, 7).unwrap();
    let c = vae.encode(&f, false, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.z, c.z);
    assert_ne!(a.z, a.mu);
}

#[test]
fn untrained_outputs_are_sane() {
    let vae: Vae = Vae::new(VaeArch::canonical(), 0).unwrap();
    let code = vae.encode(&reset_frame(), true, 0).unwrap();
    assert_eq!(code.z.len(), 32);
    assert!(code.z.iter().chain(&code.logvar).all(|v| v.is_finite() && v.abs() < 100.0));
    let img = vae.decode(&code.z).unwrap();
    assert_eq!(img.len(), 12288);
    assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_eq!(vae.decode(&code.z).unwrap(), img);
}

#[test]
fn shape_errors() {
    let vae = tiny();
    assert!(vae.encode(&[0u8; 100], true, 0).is_err());
    assert!(vae.decode(&[0.0; 3]).is_err());
}

#[test]
fn elbo_analytic_values() {
    let kl0 = elbo_loss(&[], &[0.0; 4], &[0.0; 4], &[], 1.0).unwrap();
    assert_eq!(kl0.kl, 0.0);
    let kl1 = elbo_loss(&[], &[1.0], &[0.0], &[], 1.0).unwrap();
    assert!((kl1.kl - 0.5).abs() < 1e-12);
    let x = [0.1f32, 0.7, 0.3];
    let perfect = elbo_loss(&x, &[0.0], &[0.0], &x, 1.0).unwrap();
    assert_eq!(perfect.recon, 0.0);
    let t = elbo_loss(&x, &[1.0], &[0.5], &[0.0, 0.0, 0.0], 2.0).unwrap();
    assert!((t.total - (t.recon + 2.0 * t.kl)).abs() < 1e-12);
}

#[test]
fn graph_elbo_matches_reference() {
    let vae = Vae::<f64>::new(VaeArch::miniature(), 4).unwrap();
    let x: Vec<f64> = (0..48).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
    let mut g = clothwm::nn::Graph::new(vae.store());
    let xv = g.constant(clothwm::nn::Tensor::from_vec(&[1, 3, 4, 4], x.clone()).unwrap()).unwrap();
    let eps = g.constant(clothwm::nn::Tensor::zeros(&[1, 2])).unwrap();
    let (total, rec, kl) = vae.elbo_graph(&mut g, xv, eps).unwrap();
    let (mu, lv) = vae.encode_graph(&mut g, xv).unwrap();
    let recon = vae.decode_graph(&mut g, mu).unwrap();
    let f = |v| g.value(v).data().iter().map(|&a| a as f32).collect::<Vec<f32>>();
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let reference = elbo_loss(&x32, &f(mu), &f(lv), &f(recon), 1.0).unwrap();
    assert!((g.value(total).item() - reference.total).abs() < 1e-5);
    assert!((g.value(rec).item() - reference.recon).abs() < 1e-5);
    assert!((g.value(kl).item() - reference.kl).abs() < 1e-5);
}

#[test]
fn training_reduces_loss_over_five_epochs() {
    let cfg = EnvConfig::desk();
    let mut env = ClothEnv::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut frames = Vec::new();
    for _ in 0..4 {
        frames.push(env.reset(0).rgb);
        for _ in 0..cfg.horizon {
            let a = cfg.random_action(&mut rng);
            frames.push(env.step_flat(&a).unwrap().observation.rgb);
        }
    }
    let refs: Vec<&[u8]> = frames.iter().map(|f| f.as_slice()).collect();
    let mut vae = tiny();
    let opt = clothwm::nn::Adam::default();
    let losses: Vec<f64> = (0..5).map(|_| vae.train_epoch(&refs, 16, &opt, &mut rng).unwrap()).collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let vae = tiny();
    let mut ck = Checkpoint::new();
    vae.write_checkpoint(&mut ck, true);
    let mut other: Vae = Vae::new(VaeArch::desk(), 99).unwrap();
    other.read_checkpoint(&ck).unwrap();
    assert_eq!(other.store().flat_values(), vae.store().flat_values());
    let f = reset_frame();
    assert_eq!(other.encode(&f, true, 0).unwrap(), vae.encode(&f, true, 0).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_non_negative(mu in proptest::collection::vec(-5.0f32..5.0, 1..8), seed in 0u64..1000) {
        let lv: Vec<f32> = mu.iter().enumerate().map(|(i, _)| ((seed as f32 + i as f32) * 0.37).sin() * 4.0).collect();
        let t = elbo_loss(&[], &mu, &lv, &[], 1.0).unwrap();
        prop_assert!(t.kl >= 0.0);
    }

    #[test]
    fn seeded_init_is_reproducible(seed in 0u64..1000) {
        let a = Vae::<f32>::new(VaeArch::miniature(), seed).unwrap();
        let b = Vae::<f32>::new(VaeArch::miniature(), seed).unwrap();
        prop_assert_eq!(a.store().flat_values(), b.store().flat_values());
    }
}
