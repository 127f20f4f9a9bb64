//! Independent reference computations for the environment, CMA-ES and
//! nn-core checks. None of these call into the code paths they verify.

use clothwm::nn::{lstm_cell, Graph, LstmParams, NnError, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{contract, max_rel_error, max_rel_error_at, random_tensor};

/// Fold term by brute force: every keypoint against its mirror partner in
/// the same row, summed over all keypoints.
pub fn brute_force_fold_sum(points: &[[f64; 3]], rows: usize, cols: usize) -> f64 {
    let mut total = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let a = points[r * cols + c];
            let b = points[r * cols + (cols - 1 - c)];
            let d2: f64 = (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum();
            total += d2.sqrt();
        }
    }
    -total
}

/// Cyclic Jacobi eigenvalue sweep for small symmetric matrices; returns
/// ascending eigenvalues.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Direct (non log-space) mixture density for one scalar target.
pub fn direct_mixture_density(logits: &[f64], means: &[f64], log_sigmas: &[f64], x: f64) -> f64 {
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    logits
        .iter()
        .zip(means)
        .zip(log_sigmas)
        .map(|((l, m), ls)| {
            let s = ls.exp();
            (l.exp() / z) * (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        })
        .sum()
}

/// Parameter count of the direct-RGB conv controller, by arithmetic only:
/// conv 3→8 5×5, pool 4, conv 8→16 4×4, pool 4, dense → actions.
pub fn conv_controller_param_count(actions: usize) -> usize {
    let conv1 = 8 * 3 * 5 * 5 + 8;
    let side1 = (64 - 5 + 1) / 4;
    let conv2 = 16 * 8 * 4 * 4 + 16;
    let side2 = (side1 - 4 + 1) / 4;
    let dense = 16 * side2 * side2 * actions + actions;
    conv1 + conv2 + dense
}

// Finite-difference cases for each differentiable nn-core operation. Each
// returns the worst relative error over sampled coordinates.

pub fn case_dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", random_tensor(&mut rng, &[3, 4], 1.0));
    let b = store.add("b", random_tensor(&mut rng, &[3], 1.0));
    let x = random_tensor(&mut rng, &[2, 4], 1.0);
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> {
        let wv = g.param(w);
        let bv = g.param(b);
        let y = g.dense(v[0], wv, Some(bv))?;
        contract(g, y, seed)
    };
    max_rel_error_at(1e-3, &store, &[x], &f, 64, seed)
}

pub fn case_conv(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", random_tensor(&mut rng, &[4, 3, 3, 3], 0.5));
    let b = store.add("b", random_tensor(&mut rng, &[4], 0.5));
    let x = random_tensor(&mut rng, &[1, 3, 8, 8], 1.0);
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> {
        let wv = g.param(w);
        let bv = g.param(b);
        let y = g.conv2d(v[0], wv, Some(bv), 2)?;
        contract(g, y, seed)
    };
    max_rel_error(&store, &[x], &f, 48, seed)
}

pub fn case_deconv(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", random_tensor(&mut rng, &[3, 2, 3, 3], 0.5));
    let b = store.add("b", random_tensor(&mut rng, &[2], 0.5));
    let x = random_tensor(&mut rng, &[2, 3, 3, 3], 1.0);
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> {
        let wv = g.param(w);
        let bv = g.param(b);
        let y = g.deconv2d(v[0], wv, Some(bv), 2)?;
        contract(g, y, seed)
    };
    max_rel_error(&store, &[x], &f, 48, seed)
}

pub fn case_maxpool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = ParamStore::<f64>::new();
    // distinct values spaced well beyond the finite-difference step
    let mut vals: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
    for i in (1..vals.len()).rev() {
        let j = rng.random_range(0..=i);
        vals.swap(i, j);
    }
    let x = Tensor::from_vec(&[1, 1, 4, 4], vals).unwrap();
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> {
        let y = g.maxpool2d(v[0], 2)?;
        contract(g, y, seed)
    };
    max_rel_error(&store, &[x], &f, 64, seed)
}

pub fn case_elementwise(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = ParamStore::<f64>::new();
    let a = random_tensor(&mut rng, &[2, 3], 1.0);
    let b = random_tensor(&mut rng, &[2, 3], 1.0);
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> {
        let s = g.sigmoid(v[0])?;
        let t = g.tanh(v[1])?;
        let e = g.exp(v[0])?;
        let m = g.mul(s, t)?;
        let d = g.sub(m, e)?;
        let sc = g.scale(d, 0.7)?;
        let cat = g.concat(sc, v[1])?;
        let sl = g.slice_cols(cat, 1, 4)?;
        let r = g.reshape(sl, &[8])?;
        let r = g.reshape(r, &[2, 4])?;
        let sq = g.add(r, r)?;
        contract(g, sq, seed)
    };
    max_rel_error(&store, &[a, b], &f, 64, seed)
}

pub fn case_losses(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = ParamStore::<f64>::new();
    let pred = random_tensor(&mut rng, &[2, 5], 1.0);
    let target = random_tensor(&mut rng, &[2, 5], 1.0);
    let mu = random_tensor(&mut rng, &[2, 3], 1.0);
    let lv = random_tensor(&mut rng, &[2, 3], 1.0);
    let f = |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> {
        let se = g.squared_error(v[0], v[1])?;
        let kl = g.gaussian_kl(v[2], v[3])?;
        g.add(se, kl)
    };
    max_rel_error(&store, &[pred, target, mu, lv], &f, 64, seed)
}

pub fn case_mdn(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = ParamStore::<f64>::new();
    let (n, d, k) = (2, 3, 3);
    let head = random_tensor(&mut rng, &[n, d * 3 * k], 0.8);
    let target = random_tensor(&mut rng, &[n, d], 1.0);
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> { g.mdn_nll(v[0], v[1], k) };
    max_rel_error(&store, &[head, target], &f, 64, seed)
}

/// Five LSTM steps with a loss on every hidden state.
pub fn case_lstm_bptt(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let p = LstmParams::init(&mut store, "lstm.", 3, 4, &mut rng);
    let mut inputs: Vec<Tensor<f64>> = (0..5).map(|_| random_tensor(&mut rng, &[1, 3], 1.0)).collect();
    inputs.push(random_tensor(&mut rng, &[1, 4], 0.5));
    inputs.push(random_tensor(&mut rng, &[1, 4], 0.5));
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> {
        let (mut h, mut c) = (v[5], v[6]);
        let mut total: Option<Var> = None;
        for t in 0..5 {
            let (h2, c2) = lstm_cell(g, v[t], h, c, &p)?;
            h = h2;
            c = c2;
            let l = contract(g, h, seed + t as u64)?;
            total = Some(match total {
                Some(acc) => g.add(acc, l)?,
                None => l,
            });
        }
        Ok(total.unwrap())
    };
    max_rel_error(&store, &inputs, &f, 48, seed)
}

/// Full ELBO of the 4×4 miniature VAE, checked through every layer.
pub fn case_vae_elbo(seed: u64) -> f64 {
    use clothwm::vae::{Vae, VaeArch};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vae = Vae::<f64>::new(VaeArch::miniature(), seed).unwrap();
    let store = vae.store().clone();
    let x = Tensor::from_vec(&[2, 3, 4, 4], (0..96).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let eps = random_tensor(&mut rng, &[2, 2], 1.0);
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> {
        let eps = g.constant(eps.clone())?;
        Ok(vae.elbo_graph(g, v[0], eps)?.0)
    };
    max_rel_error(&store, &[x], &f, 48, seed)
}

/// Sequence NLL of a small MDN-RNN over `steps` steps.
pub fn case_mdn_rnn(seed: u64, steps: usize) -> f64 {
    use clothwm::mdn::{MdnConfig, MdnRnn};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MdnConfig {
        state_dim: 2,
        action_dim: 1,
        hidden: 4,
        components: 3,
    };
    let model = MdnRnn::<f64>::new(cfg, seed);
    let store = model.store().clone();
    let mut inputs: Vec<Tensor<f64>> = (0..steps).map(|_| random_tensor(&mut rng, &[2, 3], 1.0)).collect();
    inputs.extend((0..steps).map(|_| random_tensor(&mut rng, &[2, 2], 1.0)));
    let f = move |g: &mut Graph<'_, f64>, v: &[Var]| -> Result<Var, NnError> { model.sequence_nll_graph(g, &v[..steps], &v[steps..]) };
    max_rel_error(&store, &inputs, &f, 48, seed)
}
