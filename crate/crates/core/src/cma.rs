//! Covariance matrix adaptation evolution strategy (minimisation).
//!
//! Weighted recombination of the best `mu` candidates, cumulative step-size
//! adaptation, rank-one plus rank-mu covariance updates computed from
//! deviations about the previous mean, and optional elitist injection of the
//! best solution seen so far as candidate 0 of every generation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::nn::Checkpoint;

/// Above this dimension the eigendecomposition is refreshed lazily.
pub const EAGER_EIGEN_MAX_DIM: usize = 1200;
/// Smallest eigenvalue of C accepted by `ask`.
pub const MIN_EIGENVALUE: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum CmaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("covariance is degenerate (smallest eigenvalue {0:e}); restart required")]
    DegenerateCovariance(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite fitness at candidate {0}")]
    NonFiniteFitness(usize),
    #[error("no generation has been completed")]
    EmptyHistory,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Strategy learning rates.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningRates {
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
}

impl LearningRates {
    /// Standard settings as functions of the dimension and variance-effective
    /// selection mass.
    pub fn standard(dim: usize, mu_eff: f64) -> Self {
        let n = dim as f64;
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        Self { c_sigma, d_sigma, c_c, c_1, c_mu }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaConfig {
    pub dim: usize,
    pub population: usize,
    /// Fraction of the population used for recombination, `mu = ceil(x * lambda)`.
    pub elite_fraction: f64,
    /// Custom recombination weights (length `mu`, non-increasing, non-negative);
    /// normalised to sum to one. `None` selects log-decreasing weights.
    pub weights: Option<Vec<f64>>,
    pub rates: Option<LearningRates>,
    pub sigma0: f64,
    pub seed: u64,
    /// Re-insert the best solution so far as candidate 0 of each `ask`.
    pub elitism: bool,
}

impl CmaConfig {
    /// Default population `4 + floor(3 ln d)`, half of it selected, no elitism.
    pub fn new(dim: usize, sigma0: f64, seed: u64) -> Self {
        Self {
            dim,
            population: 4 + (3.0 * (dim.max(1) as f64).ln()).floor() as usize,
            elite_fraction: 0.5,
            weights: None,
            rates: None,
            sigma0,
            seed,
            elitism: false,
        }
    }

    pub fn mu(&self) -> usize {
        match &self.weights {
            Some(w) => w.len(),
            None => ((self.elite_fraction * self.population as f64).ceil() as usize).clamp(1, self.population.max(1)),
        }
    }

    /// Normalised recombination weights.
    pub fn resolved_weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = match &self.weights {
            Some(w) => w.clone(),
            None => {
                let mu = self.mu();
                (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect()
            }
        };
        let s: f64 = raw.iter().sum();
        raw.iter().map(|w| w / s).collect()
    }

    pub fn mu_eff(&self) -> f64 {
        1.0 / self.resolved_weights().iter().map(|w| w * w).sum::<f64>()
    }

    pub fn resolved_rates(&self) -> LearningRates {
        self.rates.clone().unwrap_or_else(|| LearningRates::standard(self.dim, self.mu_eff()))
    }

    pub fn validate(&self) -> Result<(), CmaError> {
        let bad = |m: &str| Err(CmaError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return bad("initial step size must be positive and finite");
        }
        let mu = self.mu();
        if mu < 1 || mu > self.population {
            return bad("need 1 <= mu <= population");
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad("weights must be finite, non-negative and not all zero");
            }
            if w.windows(2).any(|p| p[1] > p[0]) {
                return bad("weights must be non-increasing");
            }
        } else if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return bad("elite fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Optimizer state. Everything needed to continue a run lives here.
#[derive(Clone, Debug)]
pub struct CmaState {
    config: CmaConfig,
    weights: Vec<f64>,
    mu_eff: f64,
    rates: LearningRates,
    chi_n: f64,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    scales: DVector<f64>,
    min_eigenvalue: f64,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: u64,
    eigen_generation: u64,
    evaluations: u64,
    best: Option<(Vec<f64>, f64)>,
    best_trace: Vec<f64>,
}

fn check_len(expected: usize, got: usize) -> Result<(), CmaError> {
    if expected == got {
        Ok(())
    } else {
        Err(CmaError::LengthMismatch { expected, got })
    }
}

impl CmaState {
    pub fn new(config: CmaConfig, mean0: &[f64]) -> Result<Self, CmaError> {
        config.validate()?;
        check_len(config.dim, mean0.len())?;
        let n = config.dim;
        let weights = config.resolved_weights();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let rates = config.resolved_rates();
        let nf = n as f64;
        Ok(Self {
            chi_n: nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf)),
            sigma: config.sigma0,
            weights,
            mu_eff,
            rates,
            mean: DVector::from_column_slice(mean0),
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            min_eigenvalue: 1.0,
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            eigen_generation: 0,
            evaluations: 0,
            best: None,
            best_trace: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &CmaConfig {
        &self.config
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mu_eff(&self) -> f64 {
        self.mu_eff
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Eigenvalues of the covariance as of the last decomposition.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s * s).collect()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Best-so-far fitness after each completed generation.
    pub fn best_trace(&self) -> &[f64] {
        &self.best_trace
    }

    /// Best candidate over all completed generations.
    pub fn best_so_far(&self) -> Result<(&[f64], f64), CmaError> {
        self.best.as_ref().map(|(x, f)| (x.as_slice(), *f)).ok_or(CmaError::EmptyHistory)
    }

    fn injects_elite(&self) -> bool {
        self.config.elitism && self.best.is_some()
    }

    /// Samples one generation. Pure: the same state always yields the same
    /// candidates.
    pub fn ask(&self) -> Result<Vec<Vec<f64>>, CmaError> {
        if !(self.min_eigenvalue > MIN_EIGENVALUE) {
            return Err(CmaError::DegenerateCovariance(self.min_eigenvalue));
        }
        let n = self.config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.generation);
        let mut out = Vec::with_capacity(self.config.population);
        for _ in 0..self.config.population {
            let z = DVector::from_fn(n, |i, _| self.scales[i] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
            let y = &self.basis * z;
            out.push((&self.mean + self.sigma * y).as_slice().to_vec());
        }
        if self.injects_elite() {
            out[0] = self.best.as_ref().unwrap().0.clone();
        }
        Ok(out)
    }

    /// `C^{-1/2} v` from the cached decomposition.
    fn inv_sqrt_times(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut t = self.basis.tr_mul(v);
        t.component_div_assign(&self.scales);
        &self.basis * t
    }

    /// Updates the distribution from one evaluated generation.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<(), CmaError> {
        let n = self.config.dim;
        check_len(self.config.population, candidates.len())?;
        check_len(candidates.len(), fitness.len())?;
        for c in candidates {
            check_len(n, c.len())?;
        }
        if let Some(i) = fitness.iter().position(|f| !f.is_finite()) {
            return Err(CmaError::NonFiniteFitness(i));
        }

        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));

        let injected = self.injects_elite();
        let ys: Vec<DVector<f64>> = order[..self.weights.len()]
            .iter()
            .map(|&i| {
                let mut y = (DVector::from_column_slice(&candidates[i]) - &self.mean) / self.sigma;
                if injected && i == 0 {
                    // An injected point can lie far outside the sampling
                    // distribution; cap its Mahalanobis length.
                    let cap = (n as f64).sqrt() + 2.0 * n as f64 / (n as f64 + 2.0);
                    let len = self.inv_sqrt_times(&y).norm();
                    if len > cap {
                        y *= cap / len;
                    }
                }
                y
            })
            .collect();

        let mut y_w = DVector::zeros(n);
        for (w, y) in self.weights.iter().zip(&ys) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean.axpy(self.sigma, &y_w, 1.0);

        let r = &self.rates;
        let cs = r.c_sigma;
        let ps_gain = (cs * (2.0 - cs) * self.mu_eff).sqrt();
        let c_inv_y = self.inv_sqrt_times(&y_w);
        self.p_sigma = (1.0 - cs) * &self.p_sigma + ps_gain * c_inv_y;
        let ps_norm = self.p_sigma.norm();
        let g1 = (self.generation + 1) as f64;
        let denom = (1.0 - (1.0 - cs).powf(2.0 * g1)).sqrt();
        let h_sigma = ps_norm / denom < (1.4 + 2.0 / (n as f64 + 1.0)) * self.chi_n;
        let cc = r.c_c;
        let pc_gain = if h_sigma { (cc * (2.0 - cc) * self.mu_eff).sqrt() } else { 0.0 };
        self.p_c = (1.0 - cc) * &self.p_c + pc_gain * &y_w;

        let delta = if h_sigma { 0.0 } else { cc * (2.0 - cc) };
        let w_sum: f64 = self.weights.iter().sum();
        let keep = 1.0 - r.c_1 - r.c_mu * w_sum + r.c_1 * delta;
        self.cov *= keep;
        self.cov.ger(r.c_1, &self.p_c, &self.p_c, 1.0);
        for (w, y) in self.weights.iter().zip(&ys) {
            self.cov.ger(r.c_mu * w, y, y, 1.0);
        }
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        self.cov = sym;

        self.sigma *= ((cs / r.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();

        self.generation += 1;
        self.evaluations += candidates.len() as u64;
        let best_i = order[0];
        if self.best.as_ref().is_none_or(|(_, f)| fitness[best_i] < *f) {
            self.best = Some((candidates[best_i].clone(), fitness[best_i]));
        }
        self.best_trace.push(self.best.as_ref().unwrap().1);

        if n <= EAGER_EIGEN_MAX_DIM || self.generation - self.eigen_generation >= self.lazy_interval() {
            self.decompose();
        }
        Ok(())
    }

    fn lazy_interval(&self) -> u64 {
        let n = self.config.dim as f64;
        ((1.0 / (10.0 * n * (self.rates.c_1 + self.rates.c_mu))).floor() as u64).max(1)
    }

    fn decompose(&mut self) {
        self.eigen_generation = self.generation;
        if !self.cov.iter().all(|v| v.is_finite()) {
            self.min_eigenvalue = f64::NAN;
            return;
        }
        let eig = SymmetricEigen::new(self.cov.clone());
        self.min_eigenvalue = eig.eigenvalues.min();
        if self.min_eigenvalue > MIN_EIGENVALUE {
            self.scales = eig.eigenvalues.map(f64::sqrt);
            self.basis = eig.eigenvectors;
        }
    }

    /// Writes the full state under `prefix` with exact `f64` values.
    pub fn write_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) {
        let n = self.config.dim;
        let c = &self.config;
        let header = [
            n as f64,
            c.population as f64,
            c.elite_fraction,
            c.sigma0,
            (c.seed >> 32) as f64,
            (c.seed & 0xffff_ffff) as f64,
            c.elitism as u8 as f64,
            c.weights.is_some() as u8 as f64,
            c.rates.is_some() as u8 as f64,
            self.generation as f64,
            self.eigen_generation as f64,
            self.evaluations as f64,
            self.sigma,
            self.min_eigenvalue,
        ];
        ck.push_f64(&format!("{prefix}header"), &[header.len()], &header);
        let r = &self.rates;
        ck.push_f64(&format!("{prefix}rates"), &[5], &[r.c_sigma, r.d_sigma, r.c_c, r.c_1, r.c_mu]);
        ck.push_f64(&format!("{prefix}weights"), &[self.weights.len()], &self.weights);
        if let Some(w) = &c.weights {
            ck.push_f64(&format!("{prefix}raw_weights"), &[w.len()], w);
        }
        ck.push_f64(&format!("{prefix}mean"), &[n], self.mean.as_slice());
        ck.push_f64(&format!("{prefix}cov"), &[n, n], self.cov.as_slice());
        ck.push_f64(&format!("{prefix}basis"), &[n, n], self.basis.as_slice());
        ck.push_f64(&format!("{prefix}scales"), &[n], self.scales.as_slice());
        ck.push_f64(&format!("{prefix}p_sigma"), &[n], self.p_sigma.as_slice());
        ck.push_f64(&format!("{prefix}p_c"), &[n], self.p_c.as_slice());
        ck.push_f64(&format!("{prefix}best_trace"), &[self.best_trace.len()], &self.best_trace);
        if let Some((x, f)) = &self.best {
            ck.push_f64(&format!("{prefix}best_x"), &[n], x);
            ck.push_f64(&format!("{prefix}best_f"), &[], &[*f]);
        }
    }

    pub fn read_checkpoint(ck: &Checkpoint, prefix: &str) -> Result<Self, CmaError> {
        let get = |name: &str| {
            ck.get_f64(&format!("{prefix}{name}"))
                .ok_or_else(|| CmaError::Checkpoint(format!("missing entry {prefix}{name}")))
        };
        let h = get("header")?;
        if h.len() != 14 {
            return Err(CmaError::Checkpoint("bad header".into()));
        }
        let n = h[0] as usize;
        let rv = get("rates")?;
        if rv.len() != 5 {
            return Err(CmaError::Checkpoint("bad rates".into()));
        }
        let rates = LearningRates { c_sigma: rv[0], d_sigma: rv[1], c_c: rv[2], c_1: rv[3], c_mu: rv[4] };
        let config = CmaConfig {
            dim: n,
            population: h[1] as usize,
            elite_fraction: h[2],
            sigma0: h[3],
            seed: ((h[4] as u64) << 32) | h[5] as u64,
            elitism: h[6] != 0.0,
            weights: if h[7] != 0.0 { Some(get("raw_weights")?) } else { None },
            rates: if h[8] != 0.0 { Some(rates.clone()) } else { None },
        };
        let mut st = CmaState::new(config, &vec![0.0; n])?;
        let vec_n = |name: &str| -> Result<DVector<f64>, CmaError> {
            let v = get(name)?;
            check_len(n, v.len())?;
            Ok(DVector::from_vec(v))
        };
        let mat_n = |name: &str| -> Result<DMatrix<f64>, CmaError> {
            let v = get(name)?;
            check_len(n * n, v.len())?;
            Ok(DMatrix::from_vec(n, n, v))
        };
        st.rates = rates;
        st.weights = get("weights")?;
        st.mu_eff = 1.0 / st.weights.iter().map(|w| w * w).sum::<f64>();
        st.generation = h[9] as u64;
        st.eigen_generation = h[10] as u64;
        st.evaluations = h[11] as u64;
        st.sigma = h[12];
        st.min_eigenvalue = h[13];
        st.mean = vec_n("mean")?;
        st.cov = mat_n("cov")?;
        st.basis = mat_n("basis")?;
        st.scales = vec_n("scales")?;
        st.p_sigma = vec_n("p_sigma")?;
        st.p_c = vec_n("p_c")?;
        st.best_trace = get("best_trace")?;
        if ck.get(&format!("{prefix}best_f")).is_some() {
            let x = get("best_x")?;
            check_len(n, x.len())?;
            st.best = Some((x, get("best_f")?[0]));
        }
        Ok(st)
    }
}

/// Result of [`minimize`].
#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fitness: f64,
    pub evaluations: u64,
    pub generations: u64,
}

/// Runs ask/tell until the best fitness drops below `target` or the
/// evaluation budget is spent.
pub fn minimize(
    config: CmaConfig,
    mean0: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    max_evaluations: u64,
    target: f64,
) -> Result<Minimum, CmaError> {
    let mut st = CmaState::new(config, mean0)?;
    while st.evaluations() + st.config().population as u64 <= max_evaluations {
        let xs = st.ask()?;
        let fs: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        st.tell(&xs, &fs)?;
        if st.best_so_far()?.1 < target {
            break;
        }
    }
    let (x, fitness) = st.best_so_far()?;
    Ok(Minimum { x: x.to_vec(), fitness, evaluations: st.evaluations(), generations: st.generation() })
}
