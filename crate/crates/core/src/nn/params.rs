use rand::Rng;

use super::checkpoint::Checkpoint;
use super::graph::Gradients;
use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry<T: Scalar> {
    name: String,
    value: Tensor<T>,
    grad: Tensor<T>,
    m: Tensor<T>,
    v: Tensor<T>,
}

/// Named parameters with matching gradient and Adam moment buffers.
#[derive(Clone, Debug)]
pub struct ParamStore<T: Scalar = f32> {
    entries: Vec<Entry<T>>,
    adam_steps: u64,
    frozen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            adam_steps: 0,
            frozen: false,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        let shape = value.shape().to_vec();
        self.entries.push(Entry {
            name: name.to_string(),
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut impl Rng) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect();
        self.add(name, Tensor::from_vec(shape, data).expect("shape"))
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam_steps
    }

    /// A frozen store yields parameter nodes that never receive gradients.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().fill(T::zero());
        }
    }

    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (i, g) in grads.params_iter() {
            self.entries[i].grad.add_assign(g);
        }
    }

    /// Scales every accumulated gradient, e.g. to average over a batch.
    pub fn scale_grads(&mut self, s: f64) {
        let k = T::of(s);
        for e in &mut self.entries {
            for g in e.grad.data_mut() {
                *g *= k;
            }
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.entries.iter().all(|e| e.grad.all_finite())
    }

    /// Bias-corrected Adam update using the accumulated gradients.
    pub fn adam_step(&mut self, opt: &Adam) -> Result<(), NnError> {
        if self.frozen {
            return Err(NnError::ModelFrozen);
        }
        if !self.grads_finite() {
            return Err(NnError::NonFinite("gradient before adam step".into()));
        }
        self.adam_steps += 1;
        let t = self.adam_steps as f64;
        let bc1 = 1.0 - opt.beta1.powf(t);
        let bc2 = 1.0 - opt.beta2.powf(t);
        let (b1, b2) = (T::of(opt.beta1), T::of(opt.beta2));
        let (ob1, ob2) = (T::of(1.0 - opt.beta1), T::of(1.0 - opt.beta2));
        let step = T::of(opt.lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(opt.eps);
        for e in &mut self.entries {
            let g = e.grad.data();
            let m = e.m.data_mut();
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = b1 * *mi + ob1 * gi;
            }
            let v = e.v.data_mut();
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = b2 * *vi + ob2 * gi * gi;
            }
            let (m, v) = (e.m.data(), e.v.data());
            for ((p, &mi), &vi) in e.value.data_mut().iter_mut().zip(m).zip(v) {
                *p -= step * mi / ((vi * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Flat copy of every parameter, in insertion order.
    pub fn flat_values(&self) -> Vec<T> {
        self.entries.iter().flat_map(|e| e.value.data().iter().copied()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    grad: e.grad.cast(),
                    m: e.m.cast(),
                    v: e.v.cast(),
                })
                .collect(),
            adam_steps: self.adam_steps,
            frozen: self.frozen,
        }
    }

    /// Writes values (and optionally Adam state) under `prefix`.
    pub fn write_checkpoint(&self, ck: &mut Checkpoint, prefix: &str, with_optimizer: bool) {
        for e in &self.entries {
            let data: Vec<f32> = e.value.data().iter().map(|v| v.as_f64() as f32).collect();
            ck.push(&format!("{prefix}{}", e.name), e.value.shape(), data);
        }
        if with_optimizer {
            for e in &self.entries {
                let m: Vec<f32> = e.m.data().iter().map(|v| v.as_f64() as f32).collect();
                let v: Vec<f32> = e.v.data().iter().map(|v| v.as_f64() as f32).collect();
                ck.push(&format!("{prefix}adam.m.{}", e.name), e.m.shape(), m);
                ck.push(&format!("{prefix}adam.v.{}", e.name), e.v.shape(), v);
            }
            // exact for step counts below 2^24
            ck.push(&format!("{prefix}adam.steps"), &[1], vec![self.adam_steps as f32]);
        }
    }

    /// Loads values (and Adam state when present) for every entry.
    pub fn read_checkpoint(&mut self, ck: &Checkpoint, prefix: &str) -> Result<(), NnError> {
        for e in &mut self.entries {
            let key = format!("{prefix}{}", e.name);
            let (shape, data) = ck
                .get(&key)
                .ok_or_else(|| NnError::Checkpoint(format!("missing entry {key}")))?;
            if shape != e.value.shape() {
                return Err(NnError::ShapeMismatch(format!(
                    "checkpoint {key}: {:?} vs {:?}",
                    shape,
                    e.value.shape()
                )));
            }
            e.value = Tensor::from_vec(shape, data.iter().map(|&v| T::of(v as f64)).collect())?;
            if let (Some((_, m)), Some((_, v))) = (
                ck.get(&format!("{prefix}adam.m.{}", e.name)),
                ck.get(&format!("{prefix}adam.v.{}", e.name)),
            ) {
                e.m = Tensor::from_vec(shape, m.iter().map(|&x| T::of(x as f64)).collect())?;
                e.v = Tensor::from_vec(shape, v.iter().map(|&x| T::of(x as f64)).collect())?;
            }
        }
        if let Some((_, s)) = ck.get(&format!("{prefix}adam.steps")) {
            self.adam_steps = s.first().map_or(0, |&v| v as u64);
        }
        Ok(())
    }
}
