//! Empirical convergence rate of the density-product estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::kde::{linspace, trapezoid, DensityProduct};
use crate::combine::BandwidthSchedule;
use crate::error::{Error, Result};
use crate::samples::Samples;

const MSE_GRID_POINTS: usize = 1024;

/// A one-dimensional density with a known pdf that can also be sampled.
pub trait AnalyticDensity: Sync {
    fn pdf(&self, x: f64) -> f64;
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64;
    /// Interval holding essentially all of the mass.
    fn support_hint(&self) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal1d {
    pub mean: f64,
    pub sd: f64,
}

impl AnalyticDensity for Normal1d {
    fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        (-0.5 * z * z).exp() / (self.sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        Normal::new(self.mean, self.sd)
            .expect("positive sd")
            .sample(rng)
    }

    fn support_hint(&self) -> (f64, f64) {
        (self.mean - 8.0 * self.sd, self.mean + 8.0 * self.sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseRow {
    pub t: usize,
    pub mse: f64,
}

/// For each `T`, draw `T` samples from every density in each of `trials`
/// trials, form the normalized product of KDEs with the schedule's bandwidth
/// at `T`, and average the integrated squared error against the normalized
/// true product.
pub fn mse_rate_harness<D: AnalyticDensity>(
    truths: &[D],
    ts: &[usize],
    trials: usize,
    schedule: &BandwidthSchedule,
    seed: u64,
) -> Result<Vec<MseRow>> {
    if truths.is_empty() || ts.is_empty() || trials == 0 {
        return Err(Error::InvalidArgument(
            "need at least one density, one T and one trial".into(),
        ));
    }
    schedule.validate()?;
    let (lo, hi) = truths
        .iter()
        .map(AnalyticDensity::support_hint)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
    let grid = linspace(lo, hi, MSE_GRID_POINTS);
    let step = grid[1] - grid[0];
    let truth_raw: Vec<f64> = grid
        .iter()
        .map(|&x| truths.iter().map(|p| p.pdf(x)).product())
        .collect();
    let z = trapezoid(&truth_raw, step);
    let truth: Vec<f64> = truth_raw.iter().map(|v| v / z).collect();

    ts.iter()
        .map(|&t| {
            let h = schedule.resolve(1, t, &[]).at(1);
            let errors: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ trial as u64,
                    );
                    let sets: Vec<Samples> = truths
                        .iter()
                        .map(|p| {
                            Samples::new(1, (0..t).map(|_| p.sample(&mut rng)).collect())
                                .expect("1-d samples")
                        })
                        .collect();
                    let est = DensityProduct::unbounded(&sets, h, false)?;
                    let vals: Vec<f64> = grid
                        .iter()
                        .map(|&x| est.eval(&[x]))
                        .collect::<Result<_>>()?;
                    let mass = trapezoid(&vals, step);
                    let sq: Vec<f64> = vals
                        .iter()
                        .zip(&truth)
                        .map(|(v, p)| (v / mass - p).powi(2))
                        .collect();
                    Ok(trapezoid(&sq, step))
                })
                .collect::<Result<_>>()?;
            Ok(MseRow {
                t,
                mse: errors.iter().sum::<f64>() / trials as f64,
            })
        })
        .collect()
}

/// Least-squares slope of `ln mse` against `ln T`.
pub fn log_log_slope(rows: &[MseRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.t as f64).ln(), r.mse.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    num / den
}
