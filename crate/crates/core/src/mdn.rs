//! Recurrent mixture-density dynamics model: an LSTM over
//! `[state, action]` whose output head parameterizes a K-component Gaussian
//! mixture per output dimension.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::{fan_in_bound, lstm_cell, mdn_dim, Adam, Checkpoint, Graph, LstmParams, NnError, ParamId, ParamStore, Scalar, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum MdnError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MdnConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    pub components: usize,
}

impl MdnConfig {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            hidden: 256,
            components: 5,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn head_dim(&self) -> usize {
        self.state_dim * 3 * self.components
    }
}

/// Mixture parameters for every output dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub components: usize,
    /// `[D·K]` unnormalised log-weights.
    pub logits: Vec<f64>,
    pub means: Vec<f64>,
    pub log_sigmas: Vec<f64>,
}

impl MixtureParams {
    /// Splits a raw head row laid out as `[logits | means | log σ]` per
    /// dimension.
    pub fn from_head(head: &[f64], components: usize) -> Self {
        let k = components;
        let dims = head.len() / (3 * k);
        let mut out = Self {
            components: k,
            logits: Vec::with_capacity(dims * k),
            means: Vec::with_capacity(dims * k),
            log_sigmas: Vec::with_capacity(dims * k),
        };
        for d in 0..dims {
            let s = &head[d * 3 * k..(d + 1) * 3 * k];
            out.logits.extend_from_slice(&s[..k]);
            out.means.extend_from_slice(&s[k..2 * k]);
            out.log_sigmas.extend_from_slice(&s[2 * k..]);
        }
        out
    }

    pub fn dims(&self) -> usize {
        self.logits.len() / self.components
    }

    /// Mixture weights of dimension `d`.
    pub fn weights(&self, d: usize) -> Vec<f64> {
        softmax(&self.logits[d * self.components..(d + 1) * self.components], 1.0)
    }

    pub fn sigmas(&self, d: usize) -> Vec<f64> {
        self.log_sigmas[d * self.components..(d + 1) * self.components]
            .iter()
            .map(|v| v.exp())
            .collect()
    }

    /// Logits divided by `τ`, scales multiplied by `√τ`.
    pub fn tempered(&self, tau: f64) -> Result<Self, MdnError> {
        check_tau(tau)?;
        Ok(Self {
            components: self.components,
            logits: self.logits.iter().map(|l| l / tau).collect(),
            means: self.means.clone(),
            log_sigmas: self.log_sigmas.iter().map(|s| s + 0.5 * tau.ln()).collect(),
        })
    }
}

fn check_tau(tau: f64) -> Result<(), MdnError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(MdnError::NonPositiveTemperature(tau))
    }
}

pub fn softmax(logits: &[f64], tau: f64) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v / tau));
    let e: Vec<f64> = logits.iter().map(|&v| (v / tau - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-Σ_d log Σ_k π_k N(target_d; μ_k, σ_k)`, evaluated in log space.
pub fn mdn_nll(params: &MixtureParams, target: &[f64]) -> Result<f64, MdnError> {
    let k = params.components;
    if target.len() != params.dims() {
        return Err(NnError::ShapeMismatch(format!("target has {} dims, mixture {}", target.len(), params.dims())).into());
    }
    let mut total = 0.0;
    let mut row = vec![0.0f64; 3 * k];
    for (d, &t) in target.iter().enumerate() {
        row[..k].copy_from_slice(&params.logits[d * k..(d + 1) * k]);
        row[k..2 * k].copy_from_slice(&params.means[d * k..(d + 1) * k]);
        row[2 * k..].copy_from_slice(&params.log_sigmas[d * k..(d + 1) * k]);
        total += mdn_dim(&row, t, k, false).0;
    }
    Ok(total)
}

/// Draws one value per dimension at temperature `τ`.
pub fn sample_next(params: &MixtureParams, tau: f64, seed: u64) -> Result<Vec<f64>, MdnError> {
    let p = params.tempered(tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = p.components;
    Ok((0..p.dims())
        .map(|d| {
            let w = p.weights(d);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut j = k - 1;
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                if u < acc {
                    j = i;
                    break;
                }
            }
            let e: f64 = rng.sample(StandardNormal);
            p.means[d * k + j] + p.log_sigmas[d * k + j].exp() * e
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
}

impl HiddenState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// One training sequence: `states[t]`, `actions[t]` predict `states[t + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub states: Vec<Vec<f32>>,
    pub actions: Vec<Vec<f32>>,
}

impl Sequence {
    pub fn steps(&self) -> usize {
        self.actions.len().min(self.states.len().saturating_sub(1))
    }
}

#[derive(Clone, Debug)]
pub struct MdnRnn<T: Scalar = f32> {
    cfg: MdnConfig,
    store: ParamStore<T>,
    lstm: LstmParams,
    head: (ParamId, ParamId),
}

impl<T: Scalar> MdnRnn<T> {
    pub fn new(cfg: MdnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let lstm = LstmParams::init(&mut store, "lstm.", cfg.input_dim(), cfg.hidden, &mut rng);
        let hw = store.add_uniform("head.w", &[cfg.head_dim(), cfg.hidden], fan_in_bound(cfg.hidden), &mut rng);
        let hb = store.add_zeros("head.b", &[cfg.head_dim()]);
        Self {
            cfg,
            store,
            lstm,
            head: (hw, hb),
        }
    }

    /// A model whose parameters can never be updated; only its recurrence
    /// is used.
    pub fn make_untrained(cfg: MdnConfig, seed: u64) -> Self {
        let mut m = Self::new(cfg, seed);
        m.store.freeze();
        m
    }

    pub fn config(&self) -> &MdnConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn is_frozen(&self) -> bool {
        self.store.is_frozen()
    }

    fn check_input(&self, state: &[f32], action: &[f32], hs: &HiddenState) -> Result<(), NnError> {
        if state.len() != self.cfg.state_dim || action.len() != self.cfg.action_dim || hs.h.len() != self.cfg.hidden || hs.c.len() != self.cfg.hidden {
            return Err(NnError::ShapeMismatch(format!(
                "rnn_step: state {} action {} hidden {}/{} for config {:?}",
                state.len(),
                action.len(),
                hs.h.len(),
                hs.c.len(),
                self.cfg
            )));
        }
        Ok(())
    }

    fn row(v: impl Iterator<Item = f32>) -> Vec<T> {
        v.map(|x| T::of(x as f64)).collect()
    }

    fn cell(&self, g: &mut Graph<'_, T>, state: &[f32], action: &[f32], hs: &HiddenState) -> Result<(Var, Var), NnError> {
        let x = Self::row(state.iter().chain(action).copied());
        let x = g.constant(Tensor::from_vec(&[1, self.cfg.input_dim()], x)?)?;
        let h = g.constant(Tensor::from_vec(&[1, self.cfg.hidden], Self::row(hs.h.iter().copied()))?)?;
        let c = g.constant(Tensor::from_vec(&[1, self.cfg.hidden], Self::row(hs.c.iter().copied()))?)?;
        lstm_cell(g, x, h, c, &self.lstm)
    }

    fn to_hidden(g: &Graph<'_, T>, h: Var, c: Var) -> HiddenState {
        let f = |v: Var| g.value(v).data().iter().map(|x| x.as_f64() as f32).collect();
        HiddenState { h: f(h), c: f(c) }
    }

    /// One recurrent step: mixture over the next state and the new hidden
    /// state.
    pub fn rnn_step(&self, state: &[f32], action: &[f32], hs: &HiddenState) -> Result<(MixtureParams, HiddenState), NnError> {
        self.check_input(state, action, hs)?;
        let mut g = Graph::new(&self.store);
        let (h, c) = self.cell(&mut g, state, action, hs)?;
        let (w, b) = (g.param(self.head.0), g.param(self.head.1));
        let head = g.dense(h, w, Some(b))?;
        let raw: Vec<f64> = g.value(head).data().iter().map(|v| v.as_f64()).collect();
        Ok((MixtureParams::from_head(&raw, self.cfg.components), Self::to_hidden(&g, h, c)))
    }

    /// Recurrence only, skipping the mixture head.
    pub fn advance(&self, state: &[f32], action: &[f32], hs: &HiddenState) -> Result<HiddenState, NnError> {
        self.check_input(state, action, hs)?;
        let mut g = Graph::new(&self.store);
        let (h, c) = self.cell(&mut g, state, action, hs)?;
        Ok(Self::to_hidden(&g, h, c))
    }

    /// Summed NLL over a batch of equal-length sequences given as per-step
    /// inputs `[N, state + action]` and targets `[N, state]`.
    pub fn sequence_nll_graph(&self, g: &mut Graph<'_, T>, inputs: &[Var], targets: &[Var]) -> Result<Var, NnError> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(NnError::ShapeMismatch(format!("{} inputs vs {} targets", inputs.len(), targets.len())));
        }
        let n = g.shape(inputs[0])[0];
        let mut h = g.constant(Tensor::zeros(&[n, self.cfg.hidden]))?;
        let mut c = g.constant(Tensor::zeros(&[n, self.cfg.hidden]))?;
        let (w, b) = (g.param(self.head.0), g.param(self.head.1));
        let mut total: Option<Var> = None;
        for (&x, &t) in inputs.iter().zip(targets) {
            let (h2, c2) = lstm_cell(g, x, h, c, &self.lstm)?;
            h = h2;
            c = c2;
            let head = g.dense(h, w, Some(b))?;
            let nll = g.mdn_nll(head, t, self.cfg.components)?;
            total = Some(match total {
                Some(acc) => g.add(acc, nll)?,
                None => nll,
            });
        }
        Ok(total.expect("non-empty"))
    }

    fn batch_tensors(&self, seqs: &[&Sequence], steps: usize) -> Result<(Vec<Tensor<T>>, Vec<Tensor<T>>), NnError> {
        let (n, sd, ad) = (seqs.len(), self.cfg.state_dim, self.cfg.action_dim);
        let mut xs = Vec::with_capacity(steps);
        let mut ts = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut x = Vec::with_capacity(n * (sd + ad));
            let mut y = Vec::with_capacity(n * sd);
            for s in seqs {
                if s.states[t].len() != sd || s.actions[t].len() != ad || s.states[t + 1].len() != sd {
                    return Err(NnError::ShapeMismatch(format!("sequence step {t} does not match {:?}", self.cfg)));
                }
                x.extend(s.states[t].iter().chain(&s.actions[t]).map(|&v| T::of(v as f64)));
                y.extend(s.states[t + 1].iter().map(|&v| T::of(v as f64)));
            }
            xs.push(Tensor::from_vec(&[n, sd + ad], x)?);
            ts.push(Tensor::from_vec(&[n, sd], y)?);
        }
        Ok((xs, ts))
    }

    fn batches<'a>(seqs: &'a [Sequence], order: &[usize], batch: usize) -> Vec<Vec<&'a Sequence>> {
        // group by length so every batch is rectangular
        let mut lengths: Vec<usize> = order.iter().map(|&i| seqs[i].steps()).filter(|&l| l > 0).collect();
        lengths.sort_unstable();
        lengths.dedup();
        let mut out = Vec::new();
        for len in lengths {
            let group: Vec<&Sequence> = order.iter().map(|&i| &seqs[i]).filter(|s| s.steps() == len).collect();
            for chunk in group.chunks(batch.max(1)) {
                out.push(chunk.to_vec());
            }
        }
        out
    }

    fn batch_nll(&self, batch: &[&Sequence], want_grad: bool) -> Result<(f64, Option<crate::nn::Gradients<T>>), NnError> {
        let steps = batch[0].steps();
        let (xs, ts) = self.batch_tensors(batch, steps)?;
        let mut g = Graph::new(&self.store);
        let xv: Vec<Var> = xs.into_iter().map(|x| g.constant(x)).collect::<Result<_, _>>()?;
        let tv: Vec<Var> = ts.into_iter().map(|t| g.constant(t)).collect::<Result<_, _>>()?;
        let loss = self.sequence_nll_graph(&mut g, &xv, &tv)?;
        let val = g.value(loss).item().as_f64();
        let grads = if want_grad { Some(g.backward(loss)?) } else { None };
        Ok((val, grads))
    }

    /// Mean NLL per predicted scalar over every step of every sequence.
    pub fn mean_nll(&self, seqs: &[Sequence]) -> Result<f64, NnError> {
        let order: Vec<usize> = (0..seqs.len()).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        for b in Self::batches(seqs, &order, 32) {
            total += self.batch_nll(&b, false)?.0;
            count += b.len() * b[0].steps() * self.cfg.state_dim;
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }

    /// One epoch of full-sequence BPTT in shuffled minibatches. Returns the
    /// mean NLL per predicted scalar.
    pub fn train_epoch(&mut self, seqs: &[Sequence], batch: usize, opt: &Adam, rng: &mut impl Rng) -> Result<f64, NnError> {
        if self.store.is_frozen() {
            return Err(NnError::ModelFrozen);
        }
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for b in Self::batches(seqs, &order, batch) {
            let (val, grads) = self.batch_nll(&b, true)?;
            let scalars = b.len() * b[0].steps() * self.cfg.state_dim;
            total += val;
            count += scalars;
            self.store.zero_grad();
            self.store.accumulate(&grads.expect("requested"));
            self.store.scale_grads(1.0 / scalars as f64);
            self.store.adam_step(opt)?;
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, with_optimizer: bool) {
        self.store.write_checkpoint(ck, "mdn.", with_optimizer);
    }

    pub fn read_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), NnError> {
        self.store.read_checkpoint(ck, "mdn.")
    }
}
