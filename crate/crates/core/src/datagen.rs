//! Seeded synthetic instances: correlated Gaussian least squares, Bernoulli logistic regression
//! and Poisson (KL) deconvolution-style problems.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{sigmoid, Fidelity, FidelityKind};
use crate::problem::{Constraint, Problem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenConfig {
    pub kind: FidelityKind,
    pub m: usize,
    pub n: usize,
    /// Number of nonzeros in the ground truth.
    pub k: usize,
    /// Correlation between neighbouring columns, `[Σ]_{ij} = eta^{|i-j|}`.
    pub eta: f64,
    /// Target signal-to-noise ratio in dB (least squares).
    pub tau: f64,
    /// Signal scale inside the sigmoid (logistic).
    pub s: f64,
    /// Poisson gain (KL).
    pub alpha: f64,
    /// Background (KL).
    pub b: f64,
    pub seed: u64,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        DataGenConfig {
            kind: FidelityKind::LeastSquares,
            m: 100,
            n: 300,
            k: 10,
            eta: 0.9,
            tau: 8.0,
            s: 10.0,
            alpha: 50.0,
            b: 0.1,
            seed: 0,
        }
    }
}

impl DataGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Invalid("M and N must be positive".into()));
        }
        if self.k > self.n {
            return Err(Error::Invalid(format!("sparsity {} exceeds N = {}", self.k, self.n)));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::Invalid(format!("eta must lie in [0, 1), got {}", self.eta)));
        }
        if self.kind == FidelityKind::KullbackLeibler && !(self.alpha > 0.0 && self.b > 0.0) {
            return Err(Error::Invalid("KL generation needs alpha > 0 and b > 0".into()));
        }
        Ok(())
    }
}

/// A generated instance with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub a: DMatrix<f64>,
    pub y: Vec<f64>,
    pub x_true: Vec<f64>,
    /// Background offset, present for KL instances.
    pub b: Option<f64>,
    pub kind: FidelityKind,
}

impl Instance {
    /// Problem with `λ0 = lambda0_scale · F_y(0)`.
    pub fn to_problem(&self, lambda0_scale: f64, lambda2: f64) -> Result<Problem> {
        let fid = Fidelity::new(self.kind, self.y.clone(), self.b)?;
        let constraint = match self.kind {
            FidelityKind::KullbackLeibler => Constraint::Nonneg,
            _ => Constraint::Reals,
        };
        let f0 = fid.value(&DVector::zeros(self.y.len()))?;
        Problem::new(self.a.clone(), fid, lambda0_scale * f0, lambda2, constraint)
    }
}

fn toeplitz_rows(rng: &mut ChaCha8Rng, m: usize, n: usize, eta: f64) -> Result<DMatrix<f64>> {
    let z = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    if eta == 0.0 {
        return Ok(z);
    }
    let sigma = DMatrix::from_fn(n, n, |i, j| eta.powi((i as i32 - j as i32).abs()));
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Invalid(format!("covariance with eta = {eta} is not positive definite")))?;
    // Each row r = L z has covariance L L^T = Σ.
    Ok(z * chol.l().transpose())
}

fn normalize_columns(a: &mut DMatrix<f64>) {
    for mut col in a.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= nrm;
        }
    }
}

/// Least squares: correlated Gaussian rows, unit-norm columns, ±1 spikes, SNR `tau` dB.
pub fn gen_ls(config: &DataGenConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut a = toeplitz_rows(&mut rng, config.m, config.n, config.eta)?;
    normalize_columns(&mut a);
    let mut x = vec![0.0; config.n];
    for i in index::sample(&mut rng, config.n, config.k) {
        let s: f64 = rng.sample(StandardNormal);
        x[i] = if s < 0.0 { -1.0 } else { 1.0 };
    }
    let clean = &a * DVector::from_column_slice(&x);
    let power = clean.norm_squared() * 10f64.powf(-config.tau / 10.0);
    let sd = (power / config.m as f64).sqrt();
    let noise = Normal::new(0.0, sd).map_err(|e| Error::Invalid(e.to_string()))?;
    let y = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
    Ok(Instance { a, y, x_true: x, b: None, kind: FidelityKind::LeastSquares })
}

/// Logistic regression: design as for least squares, equispaced unit spikes, Bernoulli labels.
pub fn gen_lr(config: &DataGenConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut a = toeplitz_rows(&mut rng, config.m, config.n, config.eta)?;
    normalize_columns(&mut a);
    let mut x = vec![0.0; config.n];
    for j in 0..config.k {
        let idx = ((j * config.n) as f64 / config.k as f64).round() as usize;
        x[idx.min(config.n - 1)] = 1.0;
    }
    let score = &a * DVector::from_column_slice(&x);
    let y = score
        .iter()
        .map(|v| {
            let p = sigmoid(config.s * v);
            let d = Bernoulli::new(p).expect("sigmoid lies in [0, 1]");
            if d.sample(&mut rng) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(Instance { a, y, x_true: x, b: None, kind: FidelityKind::Logistic })
}

/// KL: half-normal design, positive spikes, `y = Poisson(α(Ax + b)) / α`.
pub fn gen_kl(config: &DataGenConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let a = DMatrix::from_fn(config.m, config.n, |_, _| rng.sample::<f64, _>(StandardNormal).abs());
    let mut x = vec![0.0; config.n];
    for i in index::sample(&mut rng, config.n, config.k) {
        // Uniform on (0, 1].
        x[i] = 1.0 - rng.random::<f64>();
    }
    let mean = &a * DVector::from_column_slice(&x);
    let mut y = Vec::with_capacity(config.m);
    for v in mean.iter() {
        let lam = config.alpha * (v + config.b);
        let d = Poisson::new(lam).map_err(|e| Error::Invalid(e.to_string()))?;
        let count: f64 = d.sample(&mut rng);
        y.push(count / config.alpha);
    }
    Ok(Instance { a, y, x_true: x, b: Some(config.b), kind: FidelityKind::KullbackLeibler })
}

pub fn generate(config: &DataGenConfig) -> Result<Instance> {
    match config.kind {
        FidelityKind::LeastSquares => gen_ls(config),
        FidelityKind::Logistic => gen_lr(config),
        FidelityKind::KullbackLeibler => gen_kl(config),
    }
}

/// `count` instances with seeds `seed, seed + 1, ...`, generated in parallel.
pub fn generate_batch(config: &DataGenConfig, count: usize) -> Result<Vec<Instance>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.seed = config.seed.wrapping_add(i as u64);
            generate(&c)
        })
        .collect()
}
