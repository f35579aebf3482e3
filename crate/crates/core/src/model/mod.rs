//! Target densities: model variants, datasets, shards and the subposterior
//! construction.
//!
//! A subposterior for shard `m` of `M` is the shard likelihood times the prior
//! raised to `1/M`, so the product over all shards is proportional to the
//! full-data posterior. Everything is evaluated in log space.

mod partition;
mod synthetic;

pub use partition::partition;
pub use synthetic::{generate_synthetic, SyntheticOptions};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::samples::Samples;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A point in parameter space. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("parameter vector must have d >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// The model families supported by the toolkit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `theta ~ N(prior_mean, prior_var I)`, `x_i ~ N(theta, noise_var I)`.
    GaussianConjugate {
        prior_mean: Vec<f64>,
        prior_var: f64,
        noise_var: f64,
    },
    /// Bernoulli outcomes with `logit^-1(x_i . beta)`, no intercept, and an
    /// independent `N(0, prior_scale^2)` prior on every coefficient.
    LogisticRegression { dim: usize, prior_scale: f64 },
    /// Equal-weight mixture of `components` isotropic Gaussians in
    /// `data_dim` dimensions with known variance; the parameter is the
    /// stacked vector of component means.
    GaussianMixtureMeans {
        components: usize,
        data_dim: usize,
        component_var: f64,
        prior_var: f64,
    },
    /// `a ~ Exp(lambda)`, `b ~ Gamma(alpha, beta)` (rate), `q_i ~ Gamma(a, b)`,
    /// `x_i ~ Poisson(q_i t_i)` with `q_i` integrated out. The parameter is
    /// `(ln a, ln b)`.
    PoissonGamma { lambda: f64, alpha: f64, beta: f64 },
}

impl ModelSpec {
    pub fn model_id(&self) -> &'static str {
        match self {
            ModelSpec::GaussianConjugate { .. } => "gaussian_conjugate",
            ModelSpec::LogisticRegression { .. } => "logistic_regression",
            ModelSpec::GaussianMixtureMeans { .. } => "gaussian_mixture_means",
            ModelSpec::PoissonGamma { .. } => "poisson_gamma",
        }
    }

    /// Parameter dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::GaussianConjugate { prior_mean, .. } => prior_mean.len(),
            ModelSpec::LogisticRegression { dim, .. } => *dim,
            ModelSpec::GaussianMixtureMeans {
                components,
                data_dim,
                ..
            } => components * data_dim,
            ModelSpec::PoissonGamma { .. } => 2,
        }
    }

    /// Number of numeric fields in one data record.
    pub fn record_width(&self) -> usize {
        match self {
            ModelSpec::GaussianConjugate { prior_mean, .. } => prior_mean.len(),
            ModelSpec::LogisticRegression { dim, .. } => dim + 1,
            ModelSpec::GaussianMixtureMeans { data_dim, .. } => *data_dim,
            ModelSpec::PoissonGamma { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("{}: {msg}", self.model_id())));
        match self {
            ModelSpec::GaussianConjugate {
                prior_mean,
                prior_var,
                noise_var,
            } => {
                if prior_mean.is_empty() {
                    return bad("dimension must be >= 1");
                }
                if !(*prior_var > 0.0 && *noise_var > 0.0) {
                    return bad("variances must be positive");
                }
            }
            ModelSpec::LogisticRegression { dim, prior_scale } => {
                if *dim == 0 || *prior_scale <= 0.0 {
                    return bad("need dim >= 1 and a positive prior scale");
                }
            }
            ModelSpec::GaussianMixtureMeans {
                components,
                data_dim,
                component_var,
                prior_var,
            } => {
                if *components == 0 || *data_dim == 0 {
                    return bad("need at least one component and data dimension");
                }
                if !(*component_var > 0.0 && *prior_var > 0.0) {
                    return bad("variances must be positive");
                }
            }
            ModelSpec::PoissonGamma {
                lambda,
                alpha,
                beta,
            } => {
                if !(*lambda > 0.0 && *alpha > 0.0 && *beta > 0.0) {
                    return bad("hyperparameters must be positive");
                }
            }
        }
        Ok(())
    }

    /// Default chain initialization: the prior mean in the sampled coordinates.
    pub fn prior_mean(&self) -> Vec<f64> {
        match self {
            ModelSpec::GaussianConjugate { prior_mean, .. } => prior_mean.clone(),
            ModelSpec::LogisticRegression { dim, .. } => vec![0.0; *dim],
            ModelSpec::GaussianMixtureMeans { .. } => vec![0.0; self.dim()],
            ModelSpec::PoissonGamma {
                lambda,
                alpha,
                beta,
            } => vec![(1.0 / lambda).ln(), (alpha / beta).ln()],
        }
    }

    /// Size of the exchangeable parameter blocks (mixture component means).
    pub fn label_block(&self) -> Option<usize> {
        match self {
            ModelSpec::GaussianMixtureMeans { data_dim, .. } => Some(*data_dim),
            _ => None,
        }
    }

    /// Rough scalar-operation cost of one record likelihood term.
    pub fn ops_per_record(&self) -> u64 {
        match self {
            ModelSpec::GaussianConjugate { prior_mean, .. } => prior_mean.len() as u64,
            ModelSpec::LogisticRegression { dim, .. } => *dim as u64 + 4,
            ModelSpec::GaussianMixtureMeans { .. } => self.dim() as u64 + 4,
            ModelSpec::PoissonGamma { .. } => 8,
        }
    }

    /// Log prior density in the sampled coordinates (including the Jacobian
    /// of the log transform for the Poisson-gamma model).
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        match self {
            ModelSpec::GaussianConjugate {
                prior_mean,
                prior_var,
                ..
            } => iso_normal_log_pdf(theta, prior_mean, *prior_var),
            ModelSpec::LogisticRegression { prior_scale, .. } => {
                let var = prior_scale * prior_scale;
                theta
                    .iter()
                    .map(|b| -0.5 * (LN_2PI + var.ln()) - b * b / (2.0 * var))
                    .sum()
            }
            ModelSpec::GaussianMixtureMeans { prior_var, .. } => {
                theta
                    .iter()
                    .map(|m| -0.5 * (LN_2PI + prior_var.ln()) - m * m / (2.0 * prior_var))
                    .sum()
            }
            ModelSpec::PoissonGamma {
                lambda,
                alpha,
                beta,
            } => {
                let (ln_a, ln_b) = (theta[0], theta[1]);
                let (a, b) = (ln_a.exp(), ln_b.exp());
                if !(a.is_finite() && b.is_finite()) || a == 0.0 || b == 0.0 {
                    return f64::NEG_INFINITY;
                }
                let exp_part = lambda.ln() - lambda * a + ln_a;
                let gamma_part =
                    alpha * beta.ln() - ln_gamma(*alpha) + (alpha - 1.0) * ln_b - beta * b + ln_b;
                exp_part + gamma_part
            }
        }
    }

    /// Log-likelihood of a single record.
    pub fn log_lik(&self, record: &[f64], theta: &[f64]) -> f64 {
        match self {
            ModelSpec::GaussianConjugate { noise_var, .. } => {
                iso_normal_log_pdf(record, theta, *noise_var)
            }
            ModelSpec::LogisticRegression { dim, .. } => {
                let (x, y) = record.split_at(*dim);
                let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                y[0] * eta - softplus(eta)
            }
            ModelSpec::GaussianMixtureMeans {
                components,
                data_dim,
                component_var,
                ..
            } => {
                let log_weight = -(*components as f64).ln();
                let terms = theta
                    .chunks_exact(*data_dim)
                    .map(|mu| log_weight + iso_normal_log_pdf(record, mu, *component_var));
                log_sum_exp(terms)
            }
            ModelSpec::PoissonGamma { .. } => {
                let (t, x) = (record[0], record[1]);
                let (a, b) = (theta[0].exp(), theta[1].exp());
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return f64::NEG_INFINITY;
                }
                if t == 0.0 {
                    return if x == 0.0 { 0.0 } else { f64::NEG_INFINITY };
                }
                let ln_bt = (b + t).ln();
                let count_part = if x == 0.0 { 0.0 } else { x * (t.ln() - ln_bt) };
                ln_gamma(x + a) - ln_gamma(a) - ln_gamma(x + 1.0) + a * (b.ln() - ln_bt)
                    + count_part
            }
        }
    }

    /// Closed-form posterior `N(mean, var I)` of the conjugate model given
    /// `records`, with the prior raised to `prior_weight`. `None` for other
    /// models.
    pub fn conjugate_posterior(
        &self,
        records: &Samples,
        prior_weight: f64,
    ) -> Option<(Vec<f64>, f64)> {
        let ModelSpec::GaussianConjugate {
            prior_mean,
            prior_var,
            noise_var,
        } = self
        else {
            return None;
        };
        let n = records.len() as f64;
        let precision = prior_weight / prior_var + n / noise_var;
        let var = 1.0 / precision;
        let sums = records
            .rows()
            .fold(vec![0.0; prior_mean.len()], |mut acc, r| {
                acc.iter_mut().zip(r).for_each(|(a, x)| *a += x);
                acc
            });
        let mean = prior_mean
            .iter()
            .zip(&sums)
            .map(|(m0, s)| var * (prior_weight * m0 / prior_var + s / noise_var))
            .collect();
        Some((mean, var))
    }
}

/// Classification accuracy of the posterior predictive
/// `P(y = 1 | x) = mean_t sigmoid(x . beta_t)` over labelled `records`,
/// thresholded at 1/2. Logistic regression only.
pub fn predictive_accuracy(model: &ModelSpec, draws: &Samples, records: &Samples) -> Result<f64> {
    let ModelSpec::LogisticRegression { dim, .. } = model else {
        return Err(Error::InvalidArgument(
            "predictive accuracy is defined for logistic regression only".into(),
        ));
    };
    check_records(model, records)?;
    if draws.dim() != *dim {
        return Err(Error::DimensionMismatch {
            expected: *dim,
            got: draws.dim(),
        });
    }
    if draws.is_empty() || records.is_empty() {
        return Err(Error::Empty("need posterior draws and test records".into()));
    }
    let correct = records
        .rows()
        .filter(|r| {
            let (x, y) = r.split_at(*dim);
            let p = draws
                .rows()
                .map(|b| {
                    let eta: f64 = x.iter().zip(b).map(|(a, c)| a * c).sum();
                    1.0 / (1.0 + (-eta).exp())
                })
                .sum::<f64>()
                / draws.len() as f64;
            (p >= 0.5) == (y[0] >= 0.5)
        })
        .count();
    Ok(correct as f64 / records.len() as f64)
}

/// Log of `N(x | mean, var I)`.
pub(crate) fn iso_normal_log_pdf(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * x.len() as f64 * (2.0 * PI * var).ln() - sq / (2.0 * var)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// N records of one model, stored as a dense `N x width` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub model_id: String,
    pub records: Samples,
}

impl Dataset {
    pub fn new(id: impl Into<String>, model_id: impl Into<String>, records: Samples) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("dataset has no records".into()));
        }
        Ok(Self {
            id: id.into(),
            model_id: model_id.into(),
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// One machine's share of a dataset. `index` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    pub parent_id: String,
    pub index: usize,
    pub count: usize,
    pub records: Samples,
    /// Row numbers in the parent dataset, in shard order.
    pub source_rows: Vec<usize>,
}

impl DataShard {
    /// The whole dataset as the single shard of an `M = 1` split.
    pub fn whole(dataset: &Dataset) -> Self {
        Self {
            parent_id: dataset.id.clone(),
            index: 1,
            count: 1,
            records: dataset.records.clone(),
            source_rows: (0..dataset.len()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    FullPosterior,
    Subposterior { index: usize, count: usize },
}

/// Anything an MCMC chain can target: an unnormalized log-density on `R^d`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Unnormalized log-density; `-inf` outside the support. Callers are
    /// responsible for passing a slice of length `dim()`.
    fn log_density(&self, theta: &[f64]) -> f64;

    /// Block width of exchangeable component labels, if any.
    fn label_block(&self) -> Option<usize> {
        None
    }

    /// Scalar-operation cost of one evaluation, for modeled clocks.
    fn ops_per_eval(&self) -> u64 {
        self.dim() as u64
    }
}

/// Posterior or subposterior of a model over a set of records.
#[derive(Debug, Clone, Copy)]
pub struct Posterior<'a> {
    pub model: &'a ModelSpec,
    pub records: &'a Samples,
    pub prior_weight: f64,
    pub kind: TargetKind,
}

impl<'a> Posterior<'a> {
    pub fn full(model: &'a ModelSpec, dataset: &'a Dataset) -> Self {
        Self {
            model,
            records: &dataset.records,
            prior_weight: 1.0,
            kind: TargetKind::FullPosterior,
        }
    }

    pub fn sub(model: &'a ModelSpec, shard: &'a DataShard) -> Self {
        Self {
            model,
            records: &shard.records,
            prior_weight: 1.0 / shard.count as f64,
            kind: TargetKind::Subposterior {
                index: shard.index,
                count: shard.count,
            },
        }
    }

    /// Dimension- and finiteness-checked evaluation.
    pub fn eval(&self, theta: &ParamVector) -> Result<f64> {
        check_theta(self.model, theta.as_slice())?;
        Ok(self.log_density(theta.as_slice()))
    }
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let prior = self.model.log_prior(theta);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        let mut total = self.prior_weight * prior;
        for r in self.records.rows() {
            total += self.model.log_lik(r, theta);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    fn label_block(&self) -> Option<usize> {
        self.model.label_block()
    }

    fn ops_per_eval(&self) -> u64 {
        self.records.len().max(1) as u64 * self.model.ops_per_record()
    }
}

fn check_theta(model: &ModelSpec, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: theta.len(),
        });
    }
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

fn check_records(model: &ModelSpec, records: &Samples) -> Result<()> {
    if records.dim() != model.record_width() {
        return Err(Error::DimensionMismatch {
            expected: model.record_width(),
            got: records.dim(),
        });
    }
    Ok(())
}

/// `log p(theta) + sum_i log p(x_i | theta)` over the whole dataset.
pub fn full_log_density(model: &ModelSpec, dataset: &Dataset, theta: &[f64]) -> Result<f64> {
    check_theta(model, theta)?;
    check_records(model, &dataset.records)?;
    Ok(Posterior::full(model, dataset).log_density(theta))
}

/// `(1/M) log p(theta) + sum_{x in shard} log p(x | theta)`.
pub fn subposterior_log_density(model: &ModelSpec, shard: &DataShard, theta: &[f64]) -> Result<f64> {
    check_theta(model, theta)?;
    check_records(model, &shard.records)?;
    if shard.count == 0 {
        return Err(Error::InvalidArgument("shard count M must be >= 1".into()));
    }
    Ok(Posterior::sub(model, shard).log_density(theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conj_1d() -> ModelSpec {
        ModelSpec::GaussianConjugate {
            prior_mean: vec![0.0],
            prior_var: 4.0,
            noise_var: 1.0,
        }
    }

    #[test]
    fn predictive_accuracy_hand_example() {
        let model = ModelSpec::LogisticRegression {
            dim: 1,
            prior_scale: 1.0,
        };
        // Draws beta = 1 and beta = 3: P(y=1|x=1) > 1/2, P(y=1|x=-1) < 1/2.
        let draws = Samples::new(1, vec![1.0, 3.0]).unwrap();
        let records = Samples::new(2, vec![1.0, 1.0, -1.0, 0.0, -1.0, 1.0]).unwrap();
        let acc = predictive_accuracy(&model, &draws, &records).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
        assert!(predictive_accuracy(&conj_1d(), &draws, &records).is_err());
    }

    #[test]
    fn logistic_zero_row_is_log_half() {
        let model = ModelSpec::LogisticRegression {
            dim: 1,
            prior_scale: 10.0,
        };
        let ds = Dataset::new("t", model.model_id(), Samples::new(2, vec![0.0, 1.0]).unwrap()).unwrap();
        for theta in [-3.0, 0.0, 2.5] {
            let full = full_log_density(&model, &ds, &[theta]).unwrap();
            let lik = full - model.log_prior(&[theta]);
            assert!((lik - 0.5f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_theta_rejected() {
        let model = conj_1d();
        let ds = Dataset::new("t", "x", Samples::new(1, vec![0.5]).unwrap()).unwrap();
        assert!(matches!(
            full_log_density(&model, &ds, &[f64::NAN]),
            Err(Error::NonFinite(0))
        ));
        assert!(matches!(
            full_log_density(&model, &ds, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn whole_shard_matches_full_posterior() {
        let model = conj_1d();
        let ds = Dataset::new("t", "x", Samples::new(1, vec![0.5, -1.0, 2.0]).unwrap()).unwrap();
        let shard = DataShard::whole(&ds);
        for theta in [-1.0, 0.3, 4.0] {
            assert_eq!(
                subposterior_log_density(&model, &shard, &[theta]).unwrap(),
                full_log_density(&model, &ds, &[theta]).unwrap()
            );
        }
    }

    #[test]
    fn poisson_gamma_zero_exposure() {
        let model = ModelSpec::PoissonGamma {
            lambda: 1.0,
            alpha: 2.0,
            beta: 1.0,
        };
        assert_eq!(model.log_lik(&[0.0, 0.0], &[0.3, -0.2]), 0.0);
        assert_eq!(model.log_lik(&[0.0, 2.0], &[0.3, -0.2]), f64::NEG_INFINITY);
    }

    #[test]
    fn poisson_gamma_matches_negative_binomial() {
        // NB(x; r=a, p=b/(b+t)) evaluated directly.
        let (a, b, t, x) = (1.7f64, 0.6f64, 2.5f64, 3.0f64);
        let model = ModelSpec::PoissonGamma {
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let p = b / (b + t);
        // Gamma(x+a)/(Gamma(a) x!) with x = 3: a(a+1)(a+2)/6
        let coef = a * (a + 1.0) * (a + 2.0) / 6.0;
        let direct = coef * p.powf(a) * (1.0 - p).powf(x);
        let got = model.log_lik(&[t, x], &[a.ln(), b.ln()]).exp();
        assert!((got - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn mixture_likelihood_is_label_symmetric() {
        let model = ModelSpec::GaussianMixtureMeans {
            components: 3,
            data_dim: 2,
            component_var: 0.5,
            prior_var: 100.0,
        };
        let theta = [1.0, 2.0, -1.0, 0.5, 3.0, -2.0];
        let swapped = [3.0, -2.0, 1.0, 2.0, -1.0, 0.5];
        let x = [0.2, 0.1];
        assert!((model.log_lik(&x, &theta) - model.log_lik(&x, &swapped)).abs() < 1e-13);
        assert!((model.log_prior(&theta) - model.log_prior(&swapped)).abs() < 1e-13);
    }
}
