//! Controllers driven by a flat parameter vector.
//!
//! Linear controllers map `[x, h]` through one affine layer; the
//! convolutional controller reads the camera image directly. Outputs are
//! squashed by `tanh`; displacement channels are then scaled by the
//! environment's `max_step`, pick channels keep their sign in `[-1, 1]`.

use thiserror::Error;

use crate::env::{IMAGE_SIZE, RGB_BYTES};
use crate::nn::{Checkpoint, Graph, NnError, ParamStore, Tensor};

/// Conv controller geometry: 3x64x64 -> conv 8@5x5 -> pool 4 -> conv 16@4x4
/// -> pool 4 -> 16x3x3.
pub const CONV1_CHANNELS: usize = 8;
pub const CONV1_KERNEL: usize = 5;
pub const CONV2_CHANNELS: usize = 16;
pub const CONV2_KERNEL: usize = 4;
pub const POOL: usize = 4;

const fn conv_feature_side() -> usize {
    ((IMAGE_SIZE - CONV1_KERNEL + 1) / POOL - CONV2_KERNEL + 1) / POOL
}

/// Length of the flattened conv feature map.
pub const CONV_FEATURES: usize = CONV2_CHANNELS * conv_feature_side() * conv_feature_side();

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLengthMismatch { expected: usize, got: usize },
    #[error("{what} has length {got}, expected {expected}")]
    InputLength { what: &'static str, expected: usize, got: usize },
    #[error("missing genome entry {0}")]
    MissingGenome(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    LinearLatent,
    LinearKeypoint,
    ConvRgb,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::LinearLatent => "linear-latent",
            PolicyKind::LinearKeypoint => "linear-keypoint",
            PolicyKind::ConvRgb => "conv-rgb",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// State input length (latent or keypoint state); unused by the conv controller.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub include_hidden: bool,
    pub action_dim: usize,
    pub max_step: f64,
}

impl PolicySpec {
    pub fn linear_latent(latent: usize, hidden: Option<usize>, action_dim: usize, max_step: f64) -> Self {
        Self::linear(PolicyKind::LinearLatent, latent, hidden, action_dim, max_step)
    }

    pub fn linear_keypoint(state: usize, hidden: Option<usize>, action_dim: usize, max_step: f64) -> Self {
        Self::linear(PolicyKind::LinearKeypoint, state, hidden, action_dim, max_step)
    }

    fn linear(kind: PolicyKind, input_dim: usize, hidden: Option<usize>, action_dim: usize, max_step: f64) -> Self {
        Self {
            kind,
            input_dim,
            hidden_dim: hidden.unwrap_or(0),
            include_hidden: hidden.is_some(),
            action_dim,
            max_step,
        }
    }

    pub fn conv_rgb(action_dim: usize, max_step: f64) -> Self {
        Self {
            kind: PolicyKind::ConvRgb,
            input_dim: RGB_BYTES,
            hidden_dim: 0,
            include_hidden: false,
            action_dim,
            max_step,
        }
    }

    /// Width of the affine layer's input.
    pub fn linear_inputs(&self) -> usize {
        match self.kind {
            PolicyKind::ConvRgb => CONV_FEATURES,
            _ => self.input_dim + if self.include_hidden { self.hidden_dim } else { 0 },
        }
    }

    pub fn param_count(&self) -> usize {
        let head = (self.linear_inputs() + 1) * self.action_dim;
        match self.kind {
            PolicyKind::ConvRgb => {
                let c1 = CONV1_CHANNELS * 3 * CONV1_KERNEL * CONV1_KERNEL + CONV1_CHANNELS;
                let c2 = CONV2_CHANNELS * CONV1_CHANNELS * CONV2_KERNEL * CONV2_KERNEL + CONV2_CHANNELS;
                c1 + c2 + head
            }
            _ => head,
        }
    }

    /// True for channels that carry a pick signal rather than a displacement.
    /// Two-gripper actions are laid out `[dx, dy, dz, pick]` per gripper.
    pub fn is_pick_channel(&self, i: usize) -> bool {
        self.action_dim.is_multiple_of(4) && i % 4 == 3
    }

    fn check(&self, params: &[f64]) -> Result<(), PolicyError> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(PolicyError::ParamLengthMismatch { expected, got: params.len() });
        }
        Ok(())
    }
}

/// Structured view of a genome. `flatten` concatenates the fields in
/// declaration order; every matrix is row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyWeights {
    /// `[O, 3, 5, 5]`, conv controller only.
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    /// `[16, 8, 4, 4]`, conv controller only.
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    /// `[action_dim, linear_inputs]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PolicyWeights {
    fn sizes(spec: &PolicySpec) -> [usize; 6] {
        let conv = spec.kind == PolicyKind::ConvRgb;
        let c = |n: usize| if conv { n } else { 0 };
        [
            c(CONV1_CHANNELS * 3 * CONV1_KERNEL * CONV1_KERNEL),
            c(CONV1_CHANNELS),
            c(CONV2_CHANNELS * CONV1_CHANNELS * CONV2_KERNEL * CONV2_KERNEL),
            c(CONV2_CHANNELS),
            spec.action_dim * spec.linear_inputs(),
            spec.action_dim,
        ]
    }

    pub fn unflatten(spec: &PolicySpec, params: &[f64]) -> Result<Self, PolicyError> {
        spec.check(params)?;
        let mut rest = params;
        let mut take = |n: usize| {
            let (a, b) = rest.split_at(n);
            rest = b;
            a.to_vec()
        };
        let s = Self::sizes(spec);
        Ok(Self {
            conv1_w: take(s[0]),
            conv1_b: take(s[1]),
            conv2_w: take(s[2]),
            conv2_b: take(s[3]),
            weight: take(s[4]),
            bias: take(s[5]),
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b, &self.weight, &self.bias]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// An immutable controller. Cheap to share across rollout workers.
#[derive(Clone, Debug)]
pub struct Policy {
    spec: PolicySpec,
    weights: PolicyWeights,
}

impl Policy {
    pub fn new(spec: PolicySpec, params: &[f64]) -> Result<Self, PolicyError> {
        let weights = PolicyWeights::unflatten(&spec, params)?;
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn weights(&self) -> &PolicyWeights {
        &self.weights
    }

    /// Pre-squash outputs of the affine head.
    pub fn preactivation(&self, features: &[f64]) -> Vec<f64> {
        let n = self.spec.linear_inputs();
        (0..self.spec.action_dim)
            .map(|o| {
                let row = &self.weights.weight[o * n..(o + 1) * n];
                row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.weights.bias[o]
            })
            .collect()
    }

    fn squash(&self, pre: Vec<f64>) -> Vec<f64> {
        pre.into_iter()
            .enumerate()
            .map(|(i, v)| {
                let t = v.tanh();
                if self.spec.is_pick_channel(i) {
                    t
                } else {
                    t * self.spec.max_step
                }
            })
            .collect()
    }

    /// Linear controller. `h` must be given exactly when the spec includes
    /// the hidden state.
    pub fn act(&self, x: &[f64], h: Option<&[f64]>) -> Result<Vec<f64>, PolicyError> {
        let s = &self.spec;
        if s.kind == PolicyKind::ConvRgb {
            return Err(PolicyError::InputLength { what: "state for a conv controller", expected: 0, got: x.len() });
        }
        if x.len() != s.input_dim {
            return Err(PolicyError::InputLength { what: "state", expected: s.input_dim, got: x.len() });
        }
        let mut feats = x.to_vec();
        match (s.include_hidden, h) {
            (true, Some(h)) if h.len() == s.hidden_dim => feats.extend_from_slice(h),
            (false, None) => {}
            (_, h) => {
                let expected = if s.include_hidden { s.hidden_dim } else { 0 };
                return Err(PolicyError::InputLength { what: "hidden state", expected, got: h.map_or(0, <[f64]>::len) });
            }
        }
        Ok(self.squash(self.preactivation(&feats)))
    }

    /// Flattened conv feature map for one `3x64x64` byte image.
    pub fn conv_features(&self, rgb: &[u8]) -> Result<Vec<f64>, PolicyError> {
        if rgb.len() != RGB_BYTES {
            return Err(PolicyError::InputLength { what: "image", expected: RGB_BYTES, got: rgb.len() });
        }
        let w = &self.weights;
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let img: Vec<f64> = rgb.iter().map(|&b| b as f64 / 255.0).collect();
        let x = g.constant(Tensor::from_vec(&[1, 3, IMAGE_SIZE, IMAGE_SIZE], img)?)?;
        let k1 = g.constant(Tensor::from_f64(&[CONV1_CHANNELS, 3, CONV1_KERNEL, CONV1_KERNEL], &w.conv1_w)?)?;
        let b1 = g.constant(Tensor::from_f64(&[CONV1_CHANNELS], &w.conv1_b)?)?;
        let k2 = g.constant(Tensor::from_f64(&[CONV2_CHANNELS, CONV1_CHANNELS, CONV2_KERNEL, CONV2_KERNEL], &w.conv2_w)?)?;
        let b2 = g.constant(Tensor::from_f64(&[CONV2_CHANNELS], &w.conv2_b)?)?;
        let y = g.conv2d(x, k1, Some(b1), 1)?;
        let y = g.maxpool2d(y, POOL)?;
        let y = g.conv2d(y, k2, Some(b2), 1)?;
        let y = g.maxpool2d(y, POOL)?;
        Ok(g.value(y).to_f64_vec())
    }

    /// Convolutional controller acting on the camera image.
    pub fn act_conv(&self, rgb: &[u8]) -> Result<Vec<f64>, PolicyError> {
        if self.spec.kind != PolicyKind::ConvRgb {
            return Err(PolicyError::InputLength { what: "image for a linear controller", expected: 0, got: rgb.len() });
        }
        let feats = self.conv_features(rgb)?;
        Ok(self.squash(self.preactivation(&feats)))
    }
}

/// Stores a genome under `name` with exact `f64` values.
pub fn write_genome(ck: &mut Checkpoint, name: &str, params: &[f64]) {
    ck.push_f64(name, &[params.len()], params);
}

pub fn read_genome(ck: &Checkpoint, name: &str) -> Result<Vec<f64>, PolicyError> {
    ck.get_f64(name).ok_or_else(|| PolicyError::MissingGenome(name.to_string()))
}
