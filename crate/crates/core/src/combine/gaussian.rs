//! Gaussian summaries of sample sets and their precision-weighted product.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{CombineResult, Method};
use crate::error::{Error, Result};
use crate::samples::Samples;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const JITTER_REL: f64 = 1e-8;
const JITTER_FLOOR: f64 = 1e-12;

/// Sample mean and (regularized) covariance of a set of draws.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl GaussianFit {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cholesky(&self) -> Option<Cholesky<f64, Dyn>> {
        Cholesky::new(self.cov.clone())
    }

    pub fn precision(&self) -> Option<DMatrix<f64>> {
        self.cholesky().map(|c| c.inverse())
    }

    pub fn log_pdf(&self, x: &[f64]) -> Option<f64> {
        self.cholesky().map(|c| mvn_log_pdf(x, &self.mean, &c))
    }

    /// Build a fit from raw moments, applying the usual regularization.
    pub fn from_moments(mean: Vec<f64>, cov: DMatrix<f64>, count: usize) -> Self {
        Self {
            mean,
            cov: regularize(cov),
            count,
        }
    }
}

/// Symmetrize and add `max(1e-8 * tr(S)/d, 1e-12) * I`.
fn regularize(mut cov: DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let sym = (&cov + cov.transpose()) * 0.5;
    cov = sym;
    let jitter = (JITTER_REL * cov.trace() / d as f64).max(JITTER_FLOOR);
    for i in 0..d {
        cov[(i, i)] += jitter;
    }
    cov
}

/// `log N(x | mean, L L^T)` given the Cholesky factor.
pub fn mvn_log_pdf(x: &[f64], mean: &[f64], chol: &Cholesky<f64, Dyn>) -> f64 {
    let d = x.len();
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol
        .l_dirty()
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (d as f64 * LN_2PI + log_det + z.norm_squared())
}

/// Unbiased sample mean and covariance (divisor `T - 1`), regularized.
pub fn fit_gaussian(samples: &Samples) -> Result<GaussianFit> {
    let t = samples.len();
    if t < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples to fit a Gaussian, got {t}"
        )));
    }
    let d = samples.dim();
    let mean = samples.mean();
    let mut cov = DMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in samples.rows() {
        for j in 0..d {
            centered[j] = r[j] - mean[j];
        }
        for a in 0..d {
            for b in 0..=a {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov /= (t - 1) as f64;
    Ok(GaussianFit::from_moments(mean, cov, t))
}

/// `Sigma_M = (sum_m Sigma_m^-1)^-1`, `mu_M = Sigma_M sum_m Sigma_m^-1 mu_m`.
pub fn gaussian_product(fits: &[GaussianFit]) -> Result<GaussianFit> {
    let first = fits
        .first()
        .ok_or_else(|| Error::Empty("no fits to combine".into()))?;
    let d = first.dim();
    let mut precision = DMatrix::zeros(d, d);
    let mut shift = DVector::zeros(d);
    for (m, fit) in fits.iter().enumerate() {
        if fit.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: fit.dim(),
            });
        }
        let p = fit
            .precision()
            .ok_or(Error::SingularCovariance { machine: m + 1 })?;
        shift += &p * DVector::from_column_slice(&fit.mean);
        precision += p;
    }
    let chol = Cholesky::new((&precision + precision.transpose()) * 0.5)
        .ok_or(Error::SingularCovariance { machine: 0 })?;
    let cov = chol.inverse();
    let mean = chol.solve(&shift);
    Ok(GaussianFit {
        mean: mean.iter().copied().collect(),
        cov: (&cov + cov.transpose()) * 0.5,
        count: fits.iter().map(|f| f.count).min().unwrap_or(0),
    })
}

/// Draw `n` i.i.d. rows from `fit`.
pub(crate) fn draw_gaussian(fit: &GaussianFit, n: usize, rng: &mut ChaCha8Rng) -> Result<Samples> {
    let d = fit.dim();
    let chol = fit
        .cholesky()
        .ok_or(Error::SingularCovariance { machine: 0 })?;
    let l = chol.l();
    let mut out = Samples::with_capacity(d, n);
    let mut z = DVector::zeros(d);
    let mean = DVector::from_column_slice(&fit.mean);
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let x = &mean + &l * &z;
        out.push(x.as_slice())?;
    }
    Ok(out)
}

/// Parametric combination: fuse the per-machine fits and sample the product.
pub fn parametric_combine(fits: &[GaussianFit], t_out: usize, seed: u64) -> Result<CombineResult> {
    let start = Instant::now();
    let product = gaussian_product(fits)?;
    let d = product.dim() as u64;
    let m = fits.len() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = draw_gaussian(&product, t_out, &mut rng)?;
    Ok(CombineResult {
        samples,
        method: Method::Parametric,
        accept_rate: None,
        weight_evals: 0,
        ops: m * d * d * d + t_out as u64 * d * d,
        wall_time: start.elapsed().as_secs_f64(),
        origins: None,
    })
}

/// Streaming mean and covariance (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    count: usize,
    mean: Vec<f64>,
    m2: DMatrix<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        let d = self.mean.len();
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for j in 0..d {
            self.mean[j] += before[j] / n;
        }
        for a in 0..d {
            let after_a = x[a] - self.mean[a];
            for b in 0..d {
                self.m2[(a, b)] += before[b] * after_a;
            }
        }
    }

    /// Current fit; `None` until two samples have arrived.
    pub fn fit(&self) -> Option<GaussianFit> {
        (self.count >= 2).then(|| {
            let cov = &self.m2 / (self.count - 1) as f64;
            GaussianFit::from_moments(self.mean.clone(), cov, self.count)
        })
    }
}
