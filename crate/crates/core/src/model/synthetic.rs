use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Gamma, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, ModelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::samples::Samples;

/// Knobs for data generation that are not part of the model itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticOptions {
    /// Poisson-gamma exposures are drawn uniformly from this range.
    pub exposure_range: (f64, f64),
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            exposure_range: (1.0, 10.0),
        }
    }
}

/// Draw `n` records from `model`, returning the data and the ground-truth
/// parameter. When `true_params` is `None` the parameter is drawn from the
/// generating distribution (standard normal coefficients for logistic
/// regression, the prior otherwise).
pub fn generate_synthetic(
    model: &ModelSpec,
    n: usize,
    seed: u64,
    true_params: Option<&ParamVector>,
    opts: &SyntheticOptions,
) -> Result<(Dataset, ParamVector)> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("need N >= 1 records".into()));
    }
    if let Some(p) = true_params {
        if p.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: p.dim(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist_err = |e: &dyn std::fmt::Display| Error::InvalidArgument(e.to_string());

    let truth: Vec<f64> = match true_params {
        Some(p) => p.as_slice().to_vec(),
        None => match model {
            ModelSpec::GaussianConjugate {
                prior_mean,
                prior_var,
                ..
            } => prior_mean
                .iter()
                .map(|m| m + prior_var.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            ModelSpec::LogisticRegression { dim, .. } => {
                (0..*dim).map(|_| rng.sample(StandardNormal)).collect()
            }
            ModelSpec::GaussianMixtureMeans { prior_var, .. } => (0..model.dim())
                .map(|_| prior_var.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            ModelSpec::PoissonGamma {
                lambda,
                alpha,
                beta,
            } => {
                let a: f64 = Exp::new(*lambda).map_err(|e| dist_err(&e))?.sample(&mut rng);
                let b: f64 = Gamma::new(*alpha, 1.0 / beta)
                    .map_err(|e| dist_err(&e))?
                    .sample(&mut rng);
                vec![a.max(1e-300).ln(), b.max(1e-300).ln()]
            }
        },
    };

    let width = model.record_width();
    let mut records = Samples::with_capacity(width, n);
    let mut row = vec![0.0; width];
    match model {
        ModelSpec::GaussianConjugate { noise_var, .. } => {
            let sd = noise_var.sqrt();
            for _ in 0..n {
                for (x, mu) in row.iter_mut().zip(&truth) {
                    *x = mu + sd * rng.sample::<f64, _>(StandardNormal);
                }
                records.push(&row)?;
            }
        }
        ModelSpec::LogisticRegression { dim, .. } => {
            for _ in 0..n {
                let mut eta = 0.0;
                for (x, b) in row[..*dim].iter_mut().zip(&truth) {
                    *x = rng.sample(StandardNormal);
                    eta += *x * b;
                }
                let p = 1.0 / (1.0 + (-eta).exp());
                let y = Bernoulli::new(p).map_err(|e| dist_err(&e))?.sample(&mut rng);
                row[*dim] = if y { 1.0 } else { 0.0 };
                records.push(&row)?;
            }
        }
        ModelSpec::GaussianMixtureMeans {
            components,
            data_dim,
            component_var,
            ..
        } => {
            let noise = Normal::new(0.0, component_var.sqrt()).map_err(|e| dist_err(&e))?;
            for _ in 0..n {
                let k = rng.random_range(0..*components);
                let mu = &truth[k * data_dim..(k + 1) * data_dim];
                for (x, m) in row.iter_mut().zip(mu) {
                    *x = m + noise.sample(&mut rng);
                }
                records.push(&row)?;
            }
        }
        ModelSpec::PoissonGamma { .. } => {
            let (a, b) = (truth[0].exp(), truth[1].exp());
            let rate = Gamma::new(a, 1.0 / b).map_err(|e| dist_err(&e))?;
            let (lo, hi) = opts.exposure_range;
            if !(lo >= 0.0 && hi >= lo) {
                return Err(Error::InvalidArgument(format!(
                    "bad exposure range ({lo}, {hi})"
                )));
            }
            for _ in 0..n {
                let t = if hi > lo { rng.random_range(lo..hi) } else { lo };
                let q: f64 = rate.sample(&mut rng);
                let mean = q * t;
                let x = if mean > 0.0 {
                    Poisson::new(mean).map_err(|e| dist_err(&e))?.sample(&mut rng)
                } else {
                    0.0
                };
                row[0] = t;
                row[1] = x;
                records.push(&row)?;
            }
        }
    }

    let id = format!("{}-n{n}-s{seed}", model.model_id());
    let dataset = Dataset::new(id, model.model_id(), records)?;
    Ok((dataset, ParamVector::new(truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_deterministic() {
        let model = ModelSpec::LogisticRegression {
            dim: 2,
            prior_scale: 10.0,
        };
        let a = generate_synthetic(&model, 100, 5, None, &Default::default()).unwrap();
        let b = generate_synthetic(&model, 100, 5, None, &Default::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.0.records.rows().all(|r| r[2] == 0.0 || r[2] == 1.0));
    }

    #[test]
    fn symmetric_mixture_centers_on_zero() {
        let model = ModelSpec::GaussianMixtureMeans {
            components: 2,
            data_dim: 1,
            component_var: 1e-4,
            prior_var: 100.0,
        };
        let truth = ParamVector::new(vec![-5.0, 5.0]).unwrap();
        let (ds, _) = generate_synthetic(&model, 20_000, 3, Some(&truth), &Default::default()).unwrap();
        // Mixture sd is ~5, so the sample mean has sd ~0.035.
        assert!(ds.records.mean()[0].abs() < 0.2);
    }

    #[test]
    fn zero_exposure_gives_zero_counts() {
        let model = ModelSpec::PoissonGamma {
            lambda: 1.0,
            alpha: 2.0,
            beta: 1.0,
        };
        let opts = SyntheticOptions {
            exposure_range: (0.0, 0.0),
        };
        let (ds, _) = generate_synthetic(&model, 50, 1, None, &opts).unwrap();
        assert!(ds.records.rows().all(|r| r[1] == 0.0));
    }

    #[test]
    fn rejects_empty_and_bad_truth() {
        let model = ModelSpec::LogisticRegression {
            dim: 3,
            prior_scale: 10.0,
        };
        assert!(generate_synthetic(&model, 0, 1, None, &Default::default()).is_err());
        let wrong = ParamVector::new(vec![1.0]).unwrap();
        assert!(generate_synthetic(&model, 5, 1, Some(&wrong), &Default::default()).is_err());
    }
}
