//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Graph`] borrows a [`ParamStore`] immutably, records every operation in
//! insertion order, and [`Graph::backward`] walks the tape in reverse. Many
//! graphs may be built concurrently over the same store; their [`Gradients`]
//! are summed afterwards in a fixed order.

use super::kernels::{self, ConvGeom};
use super::params::{ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Input,
    Param(ParamId),
    Dense { x: Var, w: Var, b: Option<Var> },
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, n: usize },
    Deconv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, n: usize },
    MaxPool { x: Var, argmax: Vec<u32> },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
    Concat(Var, Var),
    SliceCols { x: Var, start: usize },
    SumAll(Var),
    SquaredError(Var, Var),
    GaussianKl { mu: Var, logvar: Var },
    MdnNll { head: Var, target: Var, k: usize },
}

struct Node<T: Scalar> {
    value: Option<Tensor<T>>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'s, T: Scalar = f32> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
}

/// Gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar = f32> {
    params: Vec<Option<Tensor<T>>>,
    inputs: Vec<(Var, Tensor<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn empty(n_params: usize) -> Self {
        Self {
            params: vec![None; n_params],
            inputs: Vec::new(),
        }
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.index()).and_then(|g| g.as_ref())
    }

    pub fn input(&self, v: Var) -> Option<&Tensor<T>> {
        self.inputs.iter().find(|(k, _)| *k == v).map(|(_, t)| t)
    }

    /// Adds parameter gradients of `other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => m.add_assign(t),
                (None, Some(t)) => *mine = Some(t.clone()),
                _ => {}
            }
        }
    }

    pub(crate) fn params_iter(&self) -> impl Iterator<Item = (usize, &Tensor<T>)> {
        self.params
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (i, g)))
    }
}

fn shape_err(op: &str, detail: String) -> NnError {
    NnError::ShapeMismatch(format!("{op}: {detail}"))
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<'s, T: Scalar> Graph<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool, name: &str) -> Result<Var, NnError> {
        if !value.all_finite() {
            return Err(NnError::NonFinite(format!("forward {name}")));
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var, NnError> {
        self.push(t, Op::Constant, false, "constant")
    }

    /// A leaf whose gradient is reported in [`Gradients::input`].
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var, NnError> {
        self.push(t, Op::Input, true, "input")
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let trainable = !self.store.is_frozen();
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(shape_err("dense", format!("input {xs:?} weights {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err("dense", format!("bias {:?} for {} outputs", self.shape(b), ws[0])));
            }
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let y = kernels::dense_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            n,
            din,
            dout,
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(Tensor::from_vec(&[n, dout], y)?, Op::Dense { x, w, b }, ng, "dense")
    }

    /// Valid cross-correlation of `[N, C, H, W]` input with `[O, C, kh, kw]` kernels.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || ws[2] > xs[2] || ws[3] > xs[3] || stride == 0 {
            return Err(shape_err("conv2d", format!("input {xs:?} kernels {ws:?} stride {stride}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err("conv2d", format!("bias {:?}", self.shape(b))));
            }
        }
        let geom = ConvGeom::new(xs[1], xs[2], xs[3], ws[2], ws[3], stride);
        let n = xs[0];
        let y = kernels::conv_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            n,
            ws[0],
            &geom,
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        let t = Tensor::from_vec(&[n, ws[0], geom.out_h, geom.out_w], y)?;
        self.push(t, Op::Conv { x, w, b, geom, n }, ng, "conv2d")
    }

    /// Transposed convolution of `[N, C, H, W]` input with `[C, O, kh, kw]`
    /// kernels; output is `[N, O, (H-1)·s+kh, (W-1)·s+kw]`.
    pub fn deconv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[0] || stride == 0 {
            return Err(shape_err("deconv2d", format!("input {xs:?} kernels {ws:?} stride {stride}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[1]] {
                return Err(shape_err("deconv2d", format!("bias {:?}", self.shape(b))));
            }
        }
        let oh = (xs[2] - 1) * stride + ws[2];
        let ow = (xs[3] - 1) * stride + ws[3];
        let geom = ConvGeom::new(ws[1], oh, ow, ws[2], ws[3], stride);
        let n = xs[0];
        let y = kernels::deconv_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            n,
            xs[1],
            &geom,
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        let t = Tensor::from_vec(&[n, ws[1], oh, ow], y)?;
        self.push(t, Op::Deconv { x, w, b, geom, n }, ng, "deconv2d")
    }

    pub fn maxpool2d(&mut self, x: Var, window: usize) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || window == 0 || !xs[2].is_multiple_of(window) || !xs[3].is_multiple_of(window) {
            return Err(shape_err("maxpool2d", format!("input {xs:?} window {window}")));
        }
        let (y, argmax) = kernels::maxpool_forward(self.value(x).data(), xs[0] * xs[1], xs[2], xs[3], window);
        let t = Tensor::from_vec(&[xs[0], xs[1], xs[2] / window, xs[3] / window], y)?;
        let ng = self.ng(x);
        self.push(t, Op::MaxPool { x, argmax }, ng, "maxpool2d")
    }

    fn unary(&mut self, x: Var, op: Op, name: &str, f: impl Fn(T) -> T) -> Result<Var, NnError> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::from_vec(src.shape(), data)?;
        let ng = self.ng(x);
        self.push(t, op, ng, name)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NnError> {
        self.unary(x, Op::Relu(x), "relu", |v| v.max(T::zero()))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NnError> {
        self.unary(x, Op::Sigmoid(x), "sigmoid", sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NnError> {
        self.unary(x, Op::Tanh(x), "tanh", |v| v.tanh())
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, NnError> {
        self.unary(x, Op::Exp(x), "exp", |v| v.exp())
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, NnError> {
        let k = T::of(s);
        self.unary(x, Op::Scale(x, s), "scale", move |v| v * k)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, name: &str, f: impl Fn(T, T) -> T) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&p, &q)| f(p, q)).collect();
        let t = Tensor::from_vec(va.shape(), data)?;
        let ng = self.ng(a) || self.ng(b);
        self.push(t, op, ng, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, Op::Add(a, b), "add", |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, Op::Sub(a, b), "sub", |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, Op::Mul(a, b), "mul", |p, q| p * q)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let t = self.value(x).clone().reshaped(shape)?;
        let ng = self.ng(x);
        self.push(t, Op::Reshape(x), ng, "reshape")
    }

    /// Column-wise concatenation of two `[N, _]` matrices.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(shape_err("concat", format!("{sa:?} vs {sb:?}")));
        }
        let (n, p, q) = (sa[0], sa[1], sb[1]);
        let mut out = Vec::with_capacity(n * (p + q));
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        for r in 0..n {
            out.extend_from_slice(&va[r * p..(r + 1) * p]);
            out.extend_from_slice(&vb[r * q..(r + 1) * q]);
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::from_vec(&[n, p + q], out)?, Op::Concat(a, b), ng, "concat")
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || start + len > s[1] {
            return Err(shape_err("slice_cols", format!("{s:?} [{start}, {})", start + len)));
        }
        let v = self.value(x).data();
        let mut out = Vec::with_capacity(s[0] * len);
        for r in 0..s[0] {
            out.extend_from_slice(&v[r * s[1] + start..r * s[1] + start + len]);
        }
        let ng = self.ng(x);
        self.push(Tensor::from_vec(&[s[0], len], out)?, Op::SliceCols { x, start }, ng, "slice_cols")
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var, NnError> {
        let s = self.value(x).data().iter().fold(0.0f64, |a, v| a + v.as_f64());
        let ng = self.ng(x);
        self.push(Tensor::scalar(T::of(s)), Op::SumAll(x), ng, "sum_all")
    }

    /// `Σ (pred - target)²` over every element.
    pub fn squared_error(&mut self, pred: Var, target: Var) -> Result<Var, NnError> {
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err("squared_error", format!("{:?} vs {:?}", self.shape(pred), self.shape(target))));
        }
        let s = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .fold(0.0f64, |a, (&p, &t)| {
                let d = p.as_f64() - t.as_f64();
                a + d * d
            });
        let ng = self.ng(pred) || self.ng(target);
        self.push(Tensor::scalar(T::of(s)), Op::SquaredError(pred, target), ng, "squared_error")
    }

    /// `-½ Σ (1 + logvar - mu² - exp(logvar))`
    pub fn gaussian_kl(&mut self, mu: Var, logvar: Var) -> Result<Var, NnError> {
        if self.shape(mu) != self.shape(logvar) {
            return Err(shape_err("gaussian_kl", format!("{:?} vs {:?}", self.shape(mu), self.shape(logvar))));
        }
        let s = self
            .value(mu)
            .data()
            .iter()
            .zip(self.value(logvar).data())
            .fold(0.0f64, |a, (&m, &lv)| {
                let (m, lv) = (m.as_f64(), lv.as_f64());
                a - 0.5 * (1.0 + lv - m * m - lv.exp())
            });
        let ng = self.ng(mu) || self.ng(logvar);
        self.push(Tensor::scalar(T::of(s)), Op::GaussianKl { mu, logvar }, ng, "gaussian_kl")
    }

    /// Summed mixture-density negative log-likelihood.
    ///
    /// `head` is `[N, D·3K]`; for output dimension `d` the slice
    /// `[d·3K, (d+1)·3K)` holds K weight logits, K means, K log-scales.
    /// `target` is `[N, D]`.
    pub fn mdn_nll(&mut self, head: Var, target: Var, k: usize) -> Result<Var, NnError> {
        let hs = self.shape(head).to_vec();
        let ts = self.shape(target).to_vec();
        if hs.len() != 2 || ts.len() != 2 || hs[0] != ts[0] || k == 0 || hs[1] != ts[1] * 3 * k {
            return Err(shape_err("mdn_nll", format!("head {hs:?} target {ts:?} k {k}")));
        }
        let h = self.value(head).data();
        let t = self.value(target).data();
        let mut total = 0.0f64;
        for (row, trow) in h.chunks(hs[1]).zip(t.chunks(ts[1])) {
            for (d, &tv) in trow.iter().enumerate() {
                let (nll, _) = mdn_dim(&row[d * 3 * k..(d + 1) * 3 * k], tv.as_f64(), k, false);
                total += nll;
            }
        }
        let ng = self.ng(head) || self.ng(target);
        self.push(Tensor::scalar(T::of(total)), Op::MdnNll { head, target, k }, ng, "mdn_nll")
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NnError> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", format!("loss shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        let mut out = Gradients::empty(self.store.len());

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if !gy.all_finite() {
                return Err(NnError::NonFinite(format!("backward through node {i}")));
            }
            self.backward_node(i, gy, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match grads[v.0].as_mut() {
            Some(existing) => existing.add_assign(&g),
            None => grads[v.0] = Some(g),
        }
    }

    fn acc_vec(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Vec<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let t = Tensor::from_vec(self.shape(v), g).expect("gradient shape");
        self.acc(grads, v, t);
    }

    fn backward_node(&self, i: usize, gy: Tensor<T>, grads: &mut [Option<Tensor<T>>], out: &mut Gradients<T>) {
        let y = self.nodes[i].value.as_ref();
        match &self.nodes[i].op {
            Op::Constant => {}
            Op::Input => out.inputs.push((Var(i), gy)),
            Op::Param(id) => match out.params[id.index()].as_mut() {
                Some(g) => g.add_assign(&gy),
                None => out.params[id.index()] = Some(gy),
            },
            Op::Dense { x, w, b } => {
                let xs = self.shape(*x);
                let (n, din, dout) = (xs[0], xs[1], self.shape(*w)[0]);
                let (dx, dw, db) = kernels::dense_backward(
                    gy.data(),
                    self.value(*x).data(),
                    self.value(*w).data(),
                    n,
                    din,
                    dout,
                    self.ng(*x),
                    self.ng(*w),
                );
                if let Some(dx) = dx {
                    self.acc_vec(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.acc_vec(grads, *w, dw);
                }
                if let Some(b) = b {
                    self.acc_vec(grads, *b, db);
                }
            }
            Op::Conv { x, w, b, geom, n } => {
                let (dx, dw, db) = kernels::conv_backward(
                    gy.data(),
                    self.value(*x).data(),
                    self.value(*w).data(),
                    *n,
                    self.shape(*w)[0],
                    geom,
                    self.ng(*x),
                    self.ng(*w),
                );
                if let Some(dx) = dx {
                    self.acc_vec(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.acc_vec(grads, *w, dw);
                }
                if let Some(b) = b {
                    self.acc_vec(grads, *b, db);
                }
            }
            Op::Deconv { x, w, b, geom, n } => {
                let (dx, dw, db) = kernels::deconv_backward(
                    gy.data(),
                    self.value(*x).data(),
                    self.value(*w).data(),
                    *n,
                    self.shape(*x)[1],
                    geom,
                    self.ng(*x),
                    self.ng(*w),
                );
                if let Some(dx) = dx {
                    self.acc_vec(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.acc_vec(grads, *w, dw);
                }
                if let Some(b) = b {
                    self.acc_vec(grads, *b, db);
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for (&a, &g) in argmax.iter().zip(gy.data()) {
                    dx[a as usize] += g;
                }
                self.acc_vec(grads, *x, dx);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let dx = gy
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                self.acc_vec(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let yv = y.expect("value").data();
                let dx = gy.data().iter().zip(yv).map(|(&g, &s)| g * s * (T::one() - s)).collect();
                self.acc_vec(grads, *x, dx);
            }
            Op::Tanh(x) => {
                let yv = y.expect("value").data();
                let dx = gy.data().iter().zip(yv).map(|(&g, &t)| g * (T::one() - t * t)).collect();
                self.acc_vec(grads, *x, dx);
            }
            Op::Exp(x) => {
                let yv = y.expect("value").data();
                let dx = gy.data().iter().zip(yv).map(|(&g, &e)| g * e).collect();
                self.acc_vec(grads, *x, dx);
            }
            Op::Scale(x, s) => {
                let k = T::of(*s);
                let dx = gy.data().iter().map(|&g| g * k).collect();
                self.acc_vec(grads, *x, dx);
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, gy.clone());
                self.acc(grads, *b, gy);
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, gy.clone());
                let neg = gy.data().iter().map(|&g| -g).collect();
                self.acc_vec(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.ng(*a) {
                    let da = gy.data().iter().zip(vb).map(|(&g, &q)| g * q).collect();
                    self.acc_vec(grads, *a, da);
                }
                if self.ng(*b) {
                    let db = gy.data().iter().zip(va).map(|(&g, &p)| g * p).collect();
                    self.acc_vec(grads, *b, db);
                }
            }
            Op::Reshape(x) => {
                let t = gy.reshaped(self.shape(*x)).expect("reshape gradient");
                self.acc(grads, *x, t);
            }
            Op::Concat(a, b) => {
                let (n, p, q) = (self.shape(*a)[0], self.shape(*a)[1], self.shape(*b)[1]);
                let g = gy.data();
                let mut da = Vec::with_capacity(n * p);
                let mut db = Vec::with_capacity(n * q);
                for r in 0..n {
                    da.extend_from_slice(&g[r * (p + q)..r * (p + q) + p]);
                    db.extend_from_slice(&g[r * (p + q) + p..(r + 1) * (p + q)]);
                }
                self.acc_vec(grads, *a, da);
                self.acc_vec(grads, *b, db);
            }
            Op::SliceCols { x, start } => {
                let s = self.shape(*x);
                let (n, cols) = (s[0], s[1]);
                let len = gy.shape()[1];
                let mut dx = vec![T::zero(); n * cols];
                for r in 0..n {
                    dx[r * cols + start..r * cols + start + len].copy_from_slice(&gy.data()[r * len..(r + 1) * len]);
                }
                self.acc_vec(grads, *x, dx);
            }
            Op::SumAll(x) => {
                let g = gy.item();
                self.acc(grads, *x, Tensor::full(self.shape(*x), g));
            }
            Op::SquaredError(p, t) => {
                let g = gy.item() * T::of(2.0);
                let (vp, vt) = (self.value(*p).data(), self.value(*t).data());
                if self.ng(*p) {
                    let dp = vp.iter().zip(vt).map(|(&a, &b)| g * (a - b)).collect();
                    self.acc_vec(grads, *p, dp);
                }
                if self.ng(*t) {
                    let dt = vp.iter().zip(vt).map(|(&a, &b)| g * (b - a)).collect();
                    self.acc_vec(grads, *t, dt);
                }
            }
            Op::GaussianKl { mu, logvar } => {
                let g = gy.item();
                let half = T::of(0.5);
                if self.ng(*mu) {
                    let dm = self.value(*mu).data().iter().map(|&m| g * m).collect();
                    self.acc_vec(grads, *mu, dm);
                }
                if self.ng(*logvar) {
                    let dl = self
                        .value(*logvar)
                        .data()
                        .iter()
                        .map(|&lv| g * half * (lv.exp() - T::one()))
                        .collect();
                    self.acc_vec(grads, *logvar, dl);
                }
            }
            Op::MdnNll { head, target, k } => {
                let g = gy.item().as_f64();
                let hs = self.shape(*head).to_vec();
                let dims = self.shape(*target)[1];
                let h = self.value(*head).data();
                let t = self.value(*target).data();
                let mut dh = vec![T::zero(); h.len()];
                let mut dt = vec![T::zero(); t.len()];
                for r in 0..hs[0] {
                    for d in 0..dims {
                        let off = r * hs[1] + d * 3 * k;
                        let (_, grad) = mdn_dim(&h[off..off + 3 * k], t[r * dims + d].as_f64(), *k, true);
                        let grad = grad.expect("requested gradient");
                        for (j, gv) in grad.head.iter().enumerate() {
                            dh[off + j] = T::of(g * gv);
                        }
                        dt[r * dims + d] = T::of(g * grad.target);
                    }
                }
                self.acc_vec(grads, *head, dh);
                self.acc_vec(grads, *target, dt);
            }
        }
    }
}

pub(crate) struct MdnDimGrad {
    pub head: Vec<f64>,
    pub target: f64,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// NLL of one scalar target under one mixture, with optional gradient with
/// respect to `[logits | means | log-scales]` and the target.
pub(crate) fn mdn_dim<T: Scalar>(params: &[T], target: f64, k: usize, want_grad: bool) -> (f64, Option<MdnDimGrad>) {
    let logits = &params[..k];
    let means = &params[k..2 * k];
    let logsig = &params[2 * k..3 * k];
    let lmax = logits.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
    let lse_logits = lmax + logits.iter().map(|v| (v.as_f64() - lmax).exp()).sum::<f64>().ln();
    let mut joint = vec![0.0f64; k];
    for j in 0..k {
        let ls = logsig[j].as_f64();
        let z = (target - means[j].as_f64()) * (-ls).exp();
        joint[j] = logits[j].as_f64() - lse_logits - 0.5 * z * z - ls - HALF_LN_2PI;
    }
    let jmax = joint.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let lse = jmax + joint.iter().map(|v| (v - jmax).exp()).sum::<f64>().ln();
    let nll = -lse;
    if !want_grad {
        return (nll, None);
    }
    let mut head = vec![0.0f64; 3 * k];
    let mut dtarget = 0.0;
    for j in 0..k {
        let resp = (joint[j] - lse).exp();
        let pi = (logits[j].as_f64() - lse_logits).exp();
        let ls = logsig[j].as_f64();
        let inv_var = (-2.0 * ls).exp();
        let diff = target - means[j].as_f64();
        head[j] = pi - resp;
        head[k + j] = -resp * diff * inv_var;
        head[2 * k + j] = resp * (1.0 - diff * diff * inv_var);
        dtarget += resp * diff * inv_var;
    }
    (nll, Some(MdnDimGrad { head, target: dtarget }))
}
