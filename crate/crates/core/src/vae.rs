//! Convolutional variational autoencoder for 3×64×64 frames.
//!
//! Encoder: strided convs with ReLU, then a dense head producing `μ` and
//! `log σ²`. Decoder: dense to a `dec_base × 1 × 1` map, transposed convs
//! with ReLU, sigmoid output.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::{fan_in_bound, Adam, Checkpoint, Graph, NnError, ParamId, ParamStore, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

const fn conv(channels: usize, kernel: usize, stride: usize) -> ConvSpec {
    ConvSpec {
        channels,
        kernel,
        stride,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeArch {
    pub image: usize,
    pub latent: usize,
    pub encoder: Vec<ConvSpec>,
    pub dec_base: usize,
    /// The last layer must have 3 channels and restore `image`.
    pub decoder: Vec<ConvSpec>,
    pub beta: f64,
}

impl VaeArch {
    /// 32-256 channel encoder, 1024-wide decoder bottleneck.
    pub fn canonical() -> Self {
        Self::with_widths([32, 64, 128, 256], 1024, [128, 64, 32])
    }

    /// Same geometry with a quarter of the channels.
    pub fn desk() -> Self {
        Self::with_widths([8, 16, 32, 64], 256, [32, 16, 8])
    }

    pub fn with_widths(enc: [usize; 4], dec_base: usize, dec: [usize; 3]) -> Self {
        Self {
            image: 64,
            latent: 32,
            encoder: enc.iter().map(|&c| conv(c, 4, 2)).collect(),
            dec_base,
            decoder: vec![conv(dec[0], 5, 2), conv(dec[1], 5, 2), conv(dec[2], 6, 2), conv(3, 6, 2)],
            beta: 1.0,
        }
    }

    /// 4×4 images, two latent dims. Used for gradient checks.
    pub fn miniature() -> Self {
        Self {
            image: 4,
            latent: 2,
            encoder: vec![conv(2, 2, 2)],
            dec_base: 4,
            decoder: vec![conv(2, 2, 2), conv(3, 2, 2)],
            beta: 1.0,
        }
    }

    fn encoder_out(&self) -> Result<(usize, usize), NnError> {
        let mut side = self.image;
        let mut ch = 3;
        for c in &self.encoder {
            if c.kernel > side {
                return Err(NnError::ShapeMismatch(format!("encoder kernel {} exceeds map {side}", c.kernel)));
            }
            side = (side - c.kernel) / c.stride + 1;
            ch = c.channels;
        }
        Ok((ch, side))
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.encoder_out()?;
        let mut side = 1;
        for c in &self.decoder {
            side = (side - 1) * c.stride + c.kernel;
        }
        if side != self.image || self.decoder.last().map(|c| c.channels) != Some(3) {
            return Err(NnError::ShapeMismatch(format!(
                "decoder produces {side}x{side}, needs 3x{0}x{0}",
                self.image
            )));
        }
        Ok(())
    }
}

/// Posterior statistics and a sample for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub mu: Vec<f32>,
    pub logvar: Vec<f32>,
    pub z: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Reference ELBO on plain slices: sum-of-squares reconstruction plus
/// `β ·` KL to the unit Gaussian.
pub fn elbo_loss(target: &[f32], mu: &[f32], logvar: &[f32], recon: &[f32], beta: f64) -> Result<ElboTerms, NnError> {
    if target.len() != recon.len() || mu.len() != logvar.len() {
        return Err(NnError::ShapeMismatch(format!(
            "elbo: target {} recon {} mu {} logvar {}",
            target.len(),
            recon.len(),
            mu.len(),
            logvar.len()
        )));
    }
    let rec: f64 = target.iter().zip(recon).map(|(&t, &r)| (t as f64 - r as f64).powi(2)).sum();
    let kl: f64 = mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| {
            let (m, lv) = (m as f64, lv as f64);
            -0.5 * (1.0 + lv - m * m - lv.exp())
        })
        .sum();
    Ok(ElboTerms {
        total: rec + beta * kl,
        recon: rec,
        kl,
    })
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    w: ParamId,
    b: ParamId,
    stride: usize,
}

#[derive(Clone, Debug)]
pub struct Vae<T: Scalar = f32> {
    arch: VaeArch,
    store: ParamStore<T>,
    enc: Vec<Layer>,
    enc_head: (ParamId, ParamId),
    dec_in: (ParamId, ParamId),
    dec: Vec<Layer>,
}

/// Scales bytes to `[0, 1]`.
pub fn frame_to_unit<T: Scalar>(rgb: &[u8]) -> Vec<T> {
    rgb.iter().map(|&b| T::of(b as f64 / 255.0)).collect()
}

impl<T: Scalar> Vae<T> {
    pub fn new(arch: VaeArch, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut enc = Vec::new();
        let mut ch = 3;
        for (i, c) in arch.encoder.iter().enumerate() {
            let fan = ch * c.kernel * c.kernel;
            let w = store.add_uniform(&format!("enc{i}.w"), &[c.channels, ch, c.kernel, c.kernel], fan_in_bound(fan), &mut rng);
            let b = store.add_zeros(&format!("enc{i}.b"), &[c.channels]);
            enc.push(Layer { w, b, stride: c.stride });
            ch = c.channels;
        }
        let (ech, side) = arch.encoder_out()?;
        let flat = ech * side * side;
        let hw = store.add_uniform("enc_head.w", &[2 * arch.latent, flat], fan_in_bound(flat), &mut rng);
        let hb = store.add_zeros("enc_head.b", &[2 * arch.latent]);
        let dw = store.add_uniform("dec_in.w", &[arch.dec_base, arch.latent], fan_in_bound(arch.latent), &mut rng);
        let db = store.add_zeros("dec_in.b", &[arch.dec_base]);
        let mut dec = Vec::new();
        let mut ch = arch.dec_base;
        for (i, c) in arch.decoder.iter().enumerate() {
            let fan = (ch * c.kernel * c.kernel) / (c.stride * c.stride);
            let w = store.add_uniform(&format!("dec{i}.w"), &[ch, c.channels, c.kernel, c.kernel], fan_in_bound(fan), &mut rng);
            let b = store.add_zeros(&format!("dec{i}.b"), &[c.channels]);
            dec.push(Layer { w, b, stride: c.stride });
            ch = c.channels;
        }
        Ok(Self {
            arch,
            store,
            enc,
            enc_head: (hw, hb),
            dec_in: (dw, db),
            dec,
        })
    }

    pub fn arch(&self) -> &VaeArch {
        &self.arch
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn latent(&self) -> usize {
        self.arch.latent
    }

    pub fn frame_len(&self) -> usize {
        3 * self.arch.image * self.arch.image
    }

    /// `[N, 3, S, S]` → (`μ`, `log σ²`), each `[N, latent]`.
    pub fn encode_graph(&self, g: &mut Graph<'_, T>, x: Var) -> Result<(Var, Var), NnError> {
        let mut h = x;
        for l in &self.enc {
            let (w, b) = (g.param(l.w), g.param(l.b));
            h = g.conv2d(h, w, Some(b), l.stride)?;
            h = g.relu(h)?;
        }
        let n = g.shape(h)[0];
        let flat = g.value(h).len() / n.max(1);
        let h = g.reshape(h, &[n, flat])?;
        let (w, b) = (g.param(self.enc_head.0), g.param(self.enc_head.1));
        let out = g.dense(h, w, Some(b))?;
        let mu = g.slice_cols(out, 0, self.arch.latent)?;
        let logvar = g.slice_cols(out, self.arch.latent, self.arch.latent)?;
        Ok((mu, logvar))
    }

    /// `[N, latent]` → `[N, 3, S, S]` in `(0, 1)`.
    pub fn decode_graph(&self, g: &mut Graph<'_, T>, z: Var) -> Result<Var, NnError> {
        let n = g.shape(z)[0];
        let (w, b) = (g.param(self.dec_in.0), g.param(self.dec_in.1));
        let h = g.dense(z, w, Some(b))?;
        let mut h = g.reshape(h, &[n, self.arch.dec_base, 1, 1])?;
        let last = self.dec.len() - 1;
        for (i, l) in self.dec.iter().enumerate() {
            let (w, b) = (g.param(l.w), g.param(l.b));
            h = g.deconv2d(h, w, Some(b), l.stride)?;
            h = if i == last { g.sigmoid(h)? } else { g.relu(h)? };
        }
        Ok(h)
    }

    /// Returns `(total, recon, kl)` nodes for a batch `x` with fixed noise
    /// `eps` (`[N, latent]`).
    pub fn elbo_graph(&self, g: &mut Graph<'_, T>, x: Var, eps: Var) -> Result<(Var, Var, Var), NnError> {
        let (mu, logvar) = self.encode_graph(g, x)?;
        let half = g.scale(logvar, 0.5)?;
        let std = g.exp(half)?;
        let noise = g.mul(std, eps)?;
        let z = g.add(mu, noise)?;
        let recon = self.decode_graph(g, z)?;
        let rec = g.squared_error(recon, x)?;
        let kl = g.gaussian_kl(mu, logvar)?;
        let weighted = g.scale(kl, self.arch.beta)?;
        let total = g.add(rec, weighted)?;
        Ok((total, rec, kl))
    }

    fn batch_tensor(&self, frames: &[&[u8]]) -> Result<Tensor<T>, NnError> {
        let len = self.frame_len();
        let mut data = Vec::with_capacity(frames.len() * len);
        for f in frames {
            if f.len() != len {
                return Err(NnError::ShapeMismatch(format!("frame has {} bytes, expected {len}", f.len())));
            }
            data.extend(frame_to_unit::<T>(f));
        }
        let s = self.arch.image;
        Tensor::from_vec(&[frames.len(), 3, s, s], data)
    }

    /// Encodes one frame. Stochastic mode draws `ε` from a generator seeded
    /// with `seed`.
    pub fn encode(&self, rgb: &[u8], deterministic: bool, seed: u64) -> Result<LatentCode, NnError> {
        let x = self.batch_tensor(&[rgb])?;
        let mut g = Graph::new(&self.store);
        let xv = g.constant(x)?;
        let (mu, logvar) = self.encode_graph(&mut g, xv)?;
        let mu: Vec<f32> = g.value(mu).data().iter().map(|v| v.as_f64() as f32).collect();
        let logvar: Vec<f32> = g.value(logvar).data().iter().map(|v| v.as_f64() as f32).collect();
        let z = if deterministic {
            mu.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            mu.iter()
                .zip(&logvar)
                .map(|(&m, &lv)| {
                    let e: f64 = rng.sample(StandardNormal);
                    (m as f64 + (0.5 * lv as f64).exp() * e) as f32
                })
                .collect()
        };
        Ok(LatentCode { mu, logvar, z })
    }

    /// Posterior means for many frames, processed in chunks.
    pub fn encode_means(&self, frames: &[&[u8]]) -> Result<Vec<Vec<f32>>, NnError> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(64) {
            let x = self.batch_tensor(chunk)?;
            let mut g = Graph::new(&self.store);
            let xv = g.constant(x)?;
            let (mu, _) = self.encode_graph(&mut g, xv)?;
            for row in g.value(mu).data().chunks(self.arch.latent) {
                out.push(row.iter().map(|v| v.as_f64() as f32).collect());
            }
        }
        Ok(out)
    }

    /// Channel-major image with values in `[0, 1]`.
    pub fn decode(&self, z: &[f32]) -> Result<Vec<f32>, NnError> {
        if z.len() != self.arch.latent {
            return Err(NnError::ShapeMismatch(format!("latent has {} dims, expected {}", z.len(), self.arch.latent)));
        }
        let mut g = Graph::new(&self.store);
        let zt = Tensor::from_vec(&[1, z.len()], z.iter().map(|&v| T::of(v as f64)).collect())?;
        let zv = g.constant(zt)?;
        let y = self.decode_graph(&mut g, zv)?;
        Ok(g.value(y).data().iter().map(|v| v.as_f64() as f32).collect())
    }

    /// Mean per-value squared error of deterministic reconstructions.
    pub fn reconstruction_mse(&self, frames: &[&[u8]]) -> Result<f64, NnError> {
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in frames.chunks(64) {
            let x = self.batch_tensor(chunk)?;
            let mut g = Graph::new(&self.store);
            let xv = g.constant(x)?;
            let (mu, _) = self.encode_graph(&mut g, xv)?;
            let y = self.decode_graph(&mut g, mu)?;
            let l = g.squared_error(y, xv)?;
            total += g.value(l).item().as_f64();
            count += g.value(xv).len();
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }

    /// One pass over `frames` in shuffled minibatches; returns the mean
    /// per-frame loss.
    pub fn train_epoch(&mut self, frames: &[&[u8]], batch: usize, opt: &Adam, rng: &mut impl Rng) -> Result<f64, NnError> {
        if self.store.is_frozen() {
            return Err(NnError::ModelFrozen);
        }
        let mut order: Vec<usize> = (0..frames.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for idx in order.chunks(batch.max(1)) {
            let chunk: Vec<&[u8]> = idx.iter().map(|&i| frames[i]).collect();
            let x = self.batch_tensor(&chunk)?;
            let eps: Vec<T> = (0..chunk.len() * self.arch.latent)
                .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let eps = Tensor::from_vec(&[chunk.len(), self.arch.latent], eps)?;
            let grads = {
                let mut g = Graph::new(&self.store);
                let xv = g.constant(x)?;
                let ev = g.constant(eps)?;
                let (loss, _, _) = self.elbo_graph(&mut g, xv, ev)?;
                total += g.value(loss).item().as_f64();
                g.backward(loss)?
            };
            self.store.zero_grad();
            self.store.accumulate(&grads);
            self.store.scale_grads(1.0 / chunk.len() as f64);
            self.store.adam_step(opt)?;
        }
        Ok(if frames.is_empty() { 0.0 } else { total / frames.len() as f64 })
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, with_optimizer: bool) {
        self.store.write_checkpoint(ck, "vae.", with_optimizer);
    }

    pub fn read_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), NnError> {
        self.store.read_checkpoint(ck, "vae.")
    }
}
