//! Minimal reverse-mode differentiation engine and the layers the world model
//! needs: dense, conv, transposed conv, max-pool, LSTM cell, ELBO and MDN
//! losses, and Adam.

mod checkpoint;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Gradients, Graph, Var};
pub use params::{Adam, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};

pub(crate) use graph::mdn_dim;

use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("model is frozen and cannot be trained")]
    ModelFrozen,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters of one LSTM cell. Gate order in the stacked weights is
/// input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    /// `[4H, I + H]`
    pub weight: ParamId,
    /// `[4H]`
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    /// Scaled-uniform weights and a forget-gate bias of 1.
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let weight = store.add_uniform(&format!("{prefix}weight"), &[4 * hidden_dim, input_dim + hidden_dim], bound, rng);
        let mut b = vec![T::zero(); 4 * hidden_dim];
        for v in &mut b[hidden_dim..2 * hidden_dim] {
            *v = T::one();
        }
        let bias = store.add(&format!("{prefix}bias"), Tensor::from_vec(&[4 * hidden_dim], b).expect("shape"));
        Self {
            weight,
            bias,
            input_dim,
            hidden_dim,
        }
    }
}

/// One gated recurrent update: returns `(h', c')`, each `[N, H]`.
pub fn lstm_cell<T: Scalar>(g: &mut Graph<'_, T>, x: Var, h: Var, c: Var, p: &LstmParams) -> Result<(Var, Var), NnError> {
    let hd = p.hidden_dim;
    if g.shape(x).len() != 2 || g.shape(x)[1] != p.input_dim || g.shape(h) != g.shape(c) || g.shape(h)[1] != hd {
        return Err(NnError::ShapeMismatch(format!(
            "lstm_cell: x {:?} h {:?} c {:?} for input {} hidden {}",
            g.shape(x),
            g.shape(h),
            g.shape(c),
            p.input_dim,
            hd
        )));
    }
    let xh = g.concat(x, h)?;
    let w = g.param(p.weight);
    let b = g.param(p.bias);
    let gates = g.dense(xh, w, Some(b))?;
    let i_raw = g.slice_cols(gates, 0, hd)?;
    let f_raw = g.slice_cols(gates, hd, hd)?;
    let c_raw = g.slice_cols(gates, 2 * hd, hd)?;
    let o_raw = g.slice_cols(gates, 3 * hd, hd)?;
    let i = g.sigmoid(i_raw)?;
    let f = g.sigmoid(f_raw)?;
    let cand = g.tanh(c_raw)?;
    let o = g.sigmoid(o_raw)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let c_act = g.tanh(c_next)?;
    let h_next = g.mul(o, c_act)?;
    Ok((h_next, c_next))
}

/// Fan-in scaled uniform initialisation bound.
pub fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}
