#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use subpost::model::ModelSpec;
use subpost::Samples;

pub fn conjugate(d: usize) -> ModelSpec {
    ModelSpec::GaussianConjugate {
        prior_mean: vec![0.0; d],
        prior_var: 100.0,
        noise_var: 1.0,
    }
}

pub fn all_models() -> Vec<ModelSpec> {
    vec![
        conjugate(2),
        ModelSpec::LogisticRegression {
            dim: 3,
            prior_scale: 5.0,
        },
        ModelSpec::GaussianMixtureMeans {
            components: 2,
            data_dim: 2,
            component_var: 1.0,
            prior_var: 25.0,
        },
        ModelSpec::PoissonGamma {
            lambda: 1.0,
            alpha: 2.0,
            beta: 1.0,
        },
    ]
}

/// `n` draws of `N(mean, sd^2 I)`.
pub fn normal_set(n: usize, mean: &[f64], sd: f64, seed: u64) -> Samples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = mean.len();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for m in mean {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(m + sd * z);
        }
    }
    Samples::new(d, data).unwrap()
}

/// Effective sample size of a scalar series from batch means with
/// `sqrt(n)`-sized batches.
pub fn batch_means_ess(x: &[f64]) -> f64 {
    let n = x.len();
    let b = (n as f64).sqrt() as usize;
    let batches = n / b;
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let bm: Vec<f64> = x
        .chunks_exact(b)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let bvar = bm.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (n as f64 * var / (b as f64 * bvar)).min(n as f64)
}

pub fn column(s: &Samples, j: usize) -> Vec<f64> {
    s.rows().map(|r| r[j]).collect()
}
