//! Central finite-difference gradient checker.
//!
//! Works only through forward evaluations of the loss, so it stays
//! independent of every backward rule it is used to verify.

use clothwm::nn::{Graph, NnError, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default central-difference step. Small enough that truncation error and
/// ReLU kink crossings stay far below the 1e-4 tolerance in f64.
pub const STEP: f64 = 1e-5;

/// Builds a scalar loss from the graph and the registered input leaves.
pub type LossFn<'a> = dyn Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var, NnError> + 'a;

fn eval(store: &ParamStore<f64>, inputs: &[Tensor<f64>], f: &LossFn<'_>) -> f64 {
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone()).unwrap()).collect();
    let loss = f(&mut g, &vars).unwrap();
    g.value(loss).item()
}

fn rel_err(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs()).max(1e-6);
    (a - n).abs() / denom
}

/// Maximum relative error between analytic and central-difference gradients
/// over at most `max_coords` randomly chosen coordinates per tensor.
pub fn max_rel_error(store: &ParamStore<f64>, inputs: &[Tensor<f64>], f: &LossFn<'_>, max_coords: usize, seed: u64) -> f64 {
    max_rel_error_at(STEP, store, inputs, f, max_coords, seed)
}

pub fn max_rel_error_at(step: f64, store: &ParamStore<f64>, inputs: &[Tensor<f64>], f: &LossFn<'_>, max_coords: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (analytic_params, analytic_inputs) = {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone()).unwrap()).collect();
        let loss = f(&mut g, &vars).unwrap();
        let grads = g.backward(loss).unwrap();
        let p: Vec<Vec<f64>> = store
            .ids()
            .map(|id| {
                grads
                    .param(id)
                    .map(|t| t.to_f64_vec())
                    .unwrap_or_else(|| vec![0.0; store.value(id).len()])
            })
            .collect();
        let i: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(v, t)| grads.input(*v).map(|t| t.to_f64_vec()).unwrap_or_else(|| vec![0.0; t.len()]))
            .collect();
        (p, i)
    };

    let mut worst = 0.0f64;
    let pick = |len: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        if len <= max_coords {
            (0..len).collect()
        } else {
            (0..max_coords).map(|_| rng.random_range(0..len)).collect()
        }
    };

    let mut work = store.clone();
    for (pi, id) in store.ids().enumerate() {
        for c in pick(store.value(id).len(), &mut rng) {
            let orig = store.value(id).data()[c];
            work.value_mut(id).data_mut()[c] = orig + step;
            let up = eval(&work, inputs, f);
            work.value_mut(id).data_mut()[c] = orig - step;
            let down = eval(&work, inputs, f);
            work.value_mut(id).data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(rel_err(analytic_params[pi][c], numeric));
        }
    }
    let mut work_inputs = inputs.to_vec();
    for ii in 0..inputs.len() {
        for c in pick(inputs[ii].len(), &mut rng) {
            let orig = inputs[ii].data()[c];
            work_inputs[ii].data_mut()[c] = orig + step;
            let up = eval(store, &work_inputs, f);
            work_inputs[ii].data_mut()[c] = orig - step;
            let down = eval(store, &work_inputs, f);
            work_inputs[ii].data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(rel_err(analytic_inputs[ii][c], numeric));
        }
    }
    worst
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Loss that contracts an arbitrary-shaped output with fixed random weights,
/// so every output element carries a distinct gradient.
pub fn contract(g: &mut Graph<'_, f64>, y: Var, seed: u64) -> Result<Var, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let shape = g.shape(y).to_vec();
    let w = g.constant(random_tensor(&mut rng, &shape, 1.0))?;
    let p = g.mul(y, w)?;
    g.sum_all(p)
}
