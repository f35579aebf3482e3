use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::combine::{log_w, ComponentIndex, GaussianFit};
use crate::error::{Error, Result};
use crate::samples::Samples;

/// Budget on the number of mixture components a product may expand to.
pub const PRODUCT_COMPONENT_BUDGET: f64 = 1e6;

/// Gaussian kernel density estimate with a per-dimension bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    samples: Samples,
    bandwidth: Vec<f64>,
    log_norm: f64,
}

impl Kde {
    /// Isotropic bandwidth `h`.
    pub fn new(samples: Samples, h: f64) -> Result<Self> {
        let d = samples.dim();
        Self::with_bandwidths(samples, vec![h; d])
    }

    pub fn with_bandwidths(samples: Samples, bandwidth: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("KDE needs at least one sample".into()));
        }
        if bandwidth.len() != samples.dim() {
            return Err(Error::DimensionMismatch {
                expected: samples.dim(),
                got: bandwidth.len(),
            });
        }
        if !bandwidth.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidths must be positive: {bandwidth:?}")));
        }
        let log_norm = -bandwidth
            .iter()
            .map(|h| 0.5 * (2.0 * PI * h * h).ln())
            .sum::<f64>()
            - (samples.len() as f64).ln();
        Ok(Self {
            samples,
            bandwidth,
            log_norm,
        })
    }

    /// Silverman's rule of thumb in every dimension:
    /// `h_j = sd_j * (4 / ((d + 2) n))^(1 / (d + 4))`.
    pub fn silverman(samples: Samples) -> Result<Self> {
        let bw = silverman_bandwidths(&samples);
        Self::with_bandwidths(samples, bw)
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(self.eval_unchecked(theta))
    }

    pub(crate) fn eval_unchecked(&self, theta: &[f64]) -> f64 {
        let mut sum = 0.0;
        for r in self.samples.rows() {
            let mut q = 0.0;
            for ((x, c), h) in theta.iter().zip(r).zip(&self.bandwidth) {
                let z = (x - c) / h;
                q += z * z;
            }
            sum += (-0.5 * q).exp();
        }
        sum * self.log_norm.exp()
    }
}

pub(crate) fn silverman_bandwidths(samples: &Samples) -> Vec<f64> {
    let d = samples.dim() as f64;
    let n = samples.len().max(1) as f64;
    let factor = (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0));
    samples
        .std_dev()
        .into_iter()
        .map(|sd| (sd * factor).max(1e-9))
        .collect()
}

/// `(1/T) sum_t N_d(theta | theta_t, h^2 I)`.
pub fn kde(samples: &Samples, h: f64, theta: &[f64]) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    if samples.is_empty() {
        return Err(Error::Empty("KDE needs at least one sample".into()));
    }
    if theta.len() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: theta.len(),
        });
    }
    let d = samples.dim() as f64;
    let h2 = h * h;
    let sum: f64 = samples
        .rows()
        .map(|r| {
            let q: f64 = r.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
            (-q / (2.0 * h2)).exp()
        })
        .sum();
    Ok(sum / samples.len() as f64 * (2.0 * PI * h2).powf(-d / 2.0))
}

/// Product of per-machine KDEs with a shared isotropic bandwidth.
#[derive(Debug, Clone)]
pub struct DensityProduct {
    kdes: Vec<Kde>,
    normalizer: Option<f64>,
}

impl DensityProduct {
    /// Enforces the component budget; see `unbounded` for evaluation-only
    /// use at larger sample counts.
    pub fn new(sets: &[Samples], h: f64, normalized: bool) -> Result<Self> {
        let components: f64 = sets.iter().map(|s| s.len() as f64).product();
        if components > PRODUCT_COMPONENT_BUDGET {
            return Err(Error::BudgetExceeded {
                components,
                budget: PRODUCT_COMPONENT_BUDGET,
            });
        }
        Self::unbounded(sets, h, normalized)
    }

    /// Pointwise evaluation costs `sum_m T_m`, so the budget only matters
    /// when the mixture is expanded.
    pub fn unbounded(sets: &[Samples], h: f64, normalized: bool) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Empty("no sample sets".into()))?;
        let d = first.dim();
        let kdes = sets
            .iter()
            .map(|s| {
                if s.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: s.dim(),
                    });
                }
                Kde::new(s.clone(), h)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self {
            kdes,
            normalizer: None,
        };
        if normalized {
            out.normalizer = Some(out.quadrature_mass()?);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.kdes[0].dim()
    }

    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        let raw: f64 = self.kdes.iter().map(|k| k.eval_unchecked(theta)).product();
        Ok(match self.normalizer {
            Some(z) => raw / z,
            None => raw,
        })
    }

    /// Trapezoid integral of the unnormalized product over a grid covering
    /// every sample by six bandwidths (d <= 2 only).
    fn quadrature_mass(&self) -> Result<f64> {
        let d = self.dim();
        if d > 2 {
            return Err(Error::InvalidArgument(
                "quadrature normalization is limited to d <= 2".into(),
            ));
        }
        let h = self.kdes[0].bandwidth()[0];
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let (lo, hi) = self.kdes.iter().flat_map(|k| k.samples().rows().map(move |r| r[j])).fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), x| (lo.min(x), hi.max(x)),
                );
                linspace(lo - 6.0 * h, hi + 6.0 * h, 512)
            })
            .collect();
        let mut point = vec![0.0; d];
        let mass = if d == 1 {
            let vals: Vec<f64> = axes[0]
                .iter()
                .map(|&x| {
                    point[0] = x;
                    self.kdes.iter().map(|k| k.eval_unchecked(&point)).product()
                })
                .collect();
            trapezoid(&vals, axes[0][1] - axes[0][0])
        } else {
            let rows: Vec<f64> = axes[0]
                .iter()
                .map(|&x| {
                    let vals: Vec<f64> = axes[1]
                        .iter()
                        .map(|&y| {
                            let p = [x, y];
                            self.kdes.iter().map(|k| k.eval_unchecked(&p)).product()
                        })
                        .collect();
                    trapezoid(&vals, axes[1][1] - axes[1][0])
                })
                .collect();
            trapezoid(&rows, axes[0][1] - axes[0][0])
        };
        if mass > 0.0 && mass.is_finite() {
            Ok(mass)
        } else {
            Err(Error::InvalidArgument(format!("product has zero mass on the grid ({mass})")))
        }
    }

    /// Expand the product into its mixture form and evaluate at `theta`:
    /// `c T^-M sum_t w_t N(theta | theta_bar_t, (h^2/M) I)` with
    /// `c = (2 pi h^2 / M)^(d/2)`, the factor that makes the mixture equal to
    /// the kernel product rather than proportional to it. Exponential in M;
    /// the budget applies.
    pub fn eval_expanded(sets: &[Samples], h: f64, theta: &[f64]) -> Result<f64> {
        let components: f64 = sets.iter().map(|s| s.len() as f64).product();
        if components > PRODUCT_COMPONENT_BUDGET {
            return Err(Error::BudgetExceeded {
                components,
                budget: PRODUCT_COMPONENT_BUDGET,
            });
        }
        let m = sets.len();
        let var = h * h / m as f64;
        let mut idx = vec![0usize; m];
        let mut total = 0.0;
        loop {
            let (bar, lw) = log_w(&ComponentIndex(idx.clone()), sets, h)?;
            let q: f64 = theta.iter().zip(&bar).map(|(a, b)| (a - b) * (a - b)).sum();
            let log_n = -0.5 * theta.len() as f64 * (2.0 * PI * var).ln() - q / (2.0 * var);
            total += (lw + log_n).exp();
            // odometer increment
            let mut k = 0;
            loop {
                if k == m {
                    let c = (2.0 * PI * var).powf(0.5 * theta.len() as f64);
                    return Ok(c * total / components);
                }
                idx[k] += 1;
                if idx[k] < sets[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// `prod_m kde(set_m, h, theta)`, optionally divided by its quadrature mass.
pub fn density_product_pdf(sets: &[Samples], h: f64, theta: &[f64], normalized: bool) -> Result<f64> {
    DensityProduct::new(sets, h, normalized)?.eval(theta)
}

/// A density that can be evaluated pointwise.
#[derive(Debug, Clone)]
pub enum DensityEstimate {
    Kde(Kde),
    Gaussian(GaussianFit),
    Product(Vec<DensityEstimate>),
}

impl DensityEstimate {
    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        match self {
            DensityEstimate::Kde(k) => k.eval(theta),
            DensityEstimate::Gaussian(f) => f
                .log_pdf(theta)
                .map(f64::exp)
                .ok_or(Error::SingularCovariance { machine: 0 }),
            DensityEstimate::Product(parts) => {
                parts.iter().try_fold(1.0, |acc, p| Ok(acc * p.eval(theta)?))
            }
        }
    }

    /// Whether the estimate integrates to one by construction.
    pub fn is_normalized(&self) -> bool {
        !matches!(self, DensityEstimate::Product(p) if p.len() != 1)
    }
}

/// Evaluation-grid description for the L2 distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    /// Grid quadrature for d <= 2, closed-form mixture integrals above.
    #[default]
    Auto,
    /// Force grid quadrature with this many points per dimension.
    Grid(usize),
    /// Force the closed-form mixture integrals.
    Analytic,
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

pub(crate) fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[n - 1]))
}
