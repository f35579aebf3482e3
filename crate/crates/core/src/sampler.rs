//! Random-walk Metropolis-Hastings chains and the subposterior fan-out.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataShard, LogDensity, ModelSpec, Posterior, TargetKind};
use crate::samples::Samples;

/// Fraction of each chain discarded as burn-in.
pub const BURN_IN_FRACTION: f64 = 1.0 / 6.0;

const ADAPT_WINDOW: usize = 100;
const ADAPT_LOW: f64 = 0.15;
const ADAPT_HIGH: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MHConfig {
    /// Per-dimension standard deviation of the Gaussian random-walk proposal.
    pub proposal_scale: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
    /// Run a tuning pre-phase that doubles or halves a global scale factor
    /// every 100 steps until the acceptance rate sits in `[0.15, 0.35]`.
    pub adapt: bool,
    pub adapt_iterations: usize,
    /// Permute exchangeable component blocks before every proposal.
    pub permute_labels: bool,
    /// Starting point; the model's prior mean when `None`.
    pub init: Option<Vec<f64>>,
}

impl MHConfig {
    pub fn new(dim: usize, scale: f64, iterations: usize, seed: u64) -> Self {
        Self {
            proposal_scale: vec![scale; dim],
            iterations,
            seed,
            adapt: false,
            adapt_iterations: 0,
            permute_labels: false,
            init: None,
        }
    }

    pub fn with_adaptation(mut self, steps: usize) -> Self {
        self.adapt = steps > 0;
        self.adapt_iterations = steps;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.proposal_scale.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.proposal_scale.len(),
            });
        }
        if !self.proposal_scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument("proposal scales must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// One row per post-adaptation iteration, in generation order.
    pub samples: Samples,
    pub accepted: u64,
    pub accept_rate: f64,
    /// Proposals rejected because the target returned a non-finite value.
    pub non_finite: u64,
    /// Global proposal multiplier after adaptation (1 without adaptation).
    pub scale_factor: f64,
    pub adapt_iterations: usize,
    /// Scalar-operation count of the whole run, adaptation included.
    pub ops: u64,
    pub wall_time: f64,
    pub kind: TargetKind,
    pub seed: u64,
}

impl ChainOutput {
    /// Modeled or measured seconds per post-adaptation iteration.
    pub fn seconds_per_iteration(&self) -> f64 {
        self.wall_time / (self.samples.len() + self.adapt_iterations).max(1) as f64
    }
}

struct Walker<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    state: Vec<f64>,
    proposal: Vec<f64>,
    log_density: f64,
    scale: &'a [f64],
    block: Option<usize>,
    rng: ChaCha8Rng,
    non_finite: u64,
}

impl<T: LogDensity + ?Sized> Walker<'_, T> {
    fn step(&mut self, factor: f64) -> bool {
        if let Some(b) = self.block {
            permute_blocks(&mut self.state, b, &mut self.rng);
        }
        for ((p, x), s) in self.proposal.iter_mut().zip(&self.state).zip(self.scale) {
            let z: f64 = self.rng.sample(StandardNormal);
            *p = x + factor * s * z;
        }
        let lp = self.target.log_density(&self.proposal);
        let u: f64 = self.rng.random();
        if !lp.is_finite() {
            self.non_finite += 1;
            return false;
        }
        if self.log_density == f64::NEG_INFINITY || u.ln() < lp - self.log_density {
            std::mem::swap(&mut self.state, &mut self.proposal);
            self.log_density = lp;
            true
        } else {
            false
        }
    }
}

/// Fisher-Yates shuffle of the `state.len() / block` contiguous blocks.
fn permute_blocks(state: &mut [f64], block: usize, rng: &mut ChaCha8Rng) {
    let k = state.len() / block;
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        if i != j {
            for c in 0..block {
                state.swap(i * block + c, j * block + c);
            }
        }
    }
}

/// Gaussian random-walk Metropolis-Hastings on `target` starting at `init`.
pub fn run_mh<T: LogDensity + ?Sized>(
    target: &T,
    kind: TargetKind,
    init: &[f64],
    cfg: &MHConfig,
) -> Result<ChainOutput> {
    let dim = target.dim();
    cfg.validate(dim)?;
    if init.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: init.len(),
        });
    }
    let start = Instant::now();
    let lp0 = target.log_density(init);
    if !lp0.is_finite() {
        return Err(Error::InitOutsideSupport(lp0));
    }
    let block = if cfg.permute_labels {
        target.label_block().filter(|b| *b < dim)
    } else {
        None
    };
    let mut walker = Walker {
        target,
        state: init.to_vec(),
        proposal: vec![0.0; dim],
        log_density: lp0,
        scale: &cfg.proposal_scale,
        block,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        non_finite: 0,
    };

    let mut factor = 1.0;
    let adapt_steps = if cfg.adapt { cfg.adapt_iterations } else { 0 };
    let mut window = 0usize;
    for i in 0..adapt_steps {
        window += usize::from(walker.step(factor));
        if (i + 1) % ADAPT_WINDOW == 0 {
            let rate = window as f64 / ADAPT_WINDOW as f64;
            if rate > ADAPT_HIGH {
                factor *= 2.0;
            } else if rate < ADAPT_LOW {
                factor *= 0.5;
            }
            window = 0;
        }
    }

    let mut samples = Samples::with_capacity(dim, cfg.iterations);
    let mut accepted = 0u64;
    for _ in 0..cfg.iterations {
        accepted += u64::from(walker.step(factor));
        samples.push(&walker.state)?;
    }

    let ops = (adapt_steps + cfg.iterations) as u64 * target.ops_per_eval();
    Ok(ChainOutput {
        samples,
        accepted,
        accept_rate: accepted as f64 / cfg.iterations as f64,
        non_finite: walker.non_finite,
        scale_factor: factor,
        adapt_iterations: adapt_steps,
        ops,
        wall_time: start.elapsed().as_secs_f64(),
        kind,
        seed: cfg.seed,
    })
}

/// Number of leading rows dropped by `remove_burn_in` for a chain of length
/// `len`: `floor(fraction * len)`, robust to the representation error of
/// fractions like 1/6.
pub fn burn_in_count(len: usize, fraction: f64) -> usize {
    let x = fraction * len as f64;
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * x.max(1.0) { r } else { x.floor() };
    (n as usize).min(len)
}

/// Drop the first `floor(fraction * T)` rows.
pub fn remove_burn_in(samples: &Samples, fraction: f64) -> Result<Samples> {
    if samples.is_empty() {
        return Err(Error::Empty("cannot remove burn-in from an empty chain".into()));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "burn-in fraction must lie in [0, 1), got {fraction}"
        )));
    }
    Ok(samples.tail_from(burn_in_count(samples.len(), fraction)))
}

/// Post-burn-in draws from one machine plus their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SubposteriorSamples {
    pub samples: Samples,
    pub shard_index: usize,
    pub shard_count: usize,
    pub seed: u64,
    pub model_id: String,
    pub accept_rate: f64,
    pub wall_time: f64,
    pub ops: u64,
}

/// Run one independent chain per shard with seed `base_seed + m` and drop
/// burn-in. `workers == 1` runs the chains serially; otherwise they run on a
/// pool of at most `workers` threads (0 means rayon's default).
pub fn run_subposteriors(
    model: &ModelSpec,
    shards: &[DataShard],
    template: &MHConfig,
    base_seed: u64,
    workers: usize,
) -> Result<Vec<SubposteriorSamples>> {
    let chains = run_shard_chains(model, shards, template, base_seed, workers)?;
    chains
        .into_iter()
        .zip(shards)
        .map(|(chain, shard)| {
            Ok(SubposteriorSamples {
                samples: remove_burn_in(&chain.samples, BURN_IN_FRACTION)?,
                shard_index: shard.index,
                shard_count: shard.count,
                seed: chain.seed,
                model_id: model.model_id().to_string(),
                accept_rate: chain.accept_rate,
                wall_time: chain.wall_time,
                ops: chain.ops,
            })
        })
        .collect()
}

/// The raw chains behind `run_subposteriors`, burn-in still attached.
pub fn run_shard_chains(
    model: &ModelSpec,
    shards: &[DataShard],
    template: &MHConfig,
    base_seed: u64,
    workers: usize,
) -> Result<Vec<ChainOutput>> {
    if shards.is_empty() {
        return Err(Error::Empty("no shards to sample".into()));
    }
    let parent = &shards[0].parent_id;
    if shards.iter().any(|s| &s.parent_id != parent) {
        return Err(Error::InvalidArgument("shards come from different datasets".into()));
    }
    let run_one = |shard: &DataShard| -> Result<ChainOutput> {
        let target = Posterior::sub(model, shard);
        let mut cfg = template.clone();
        cfg.seed = base_seed.wrapping_add(shard.index as u64);
        let init = cfg.init.clone().unwrap_or_else(|| model.prior_mean());
        run_mh(&target, target.kind, &init, &cfg).map_err(|e| Error::Chain {
            shard: shard.index,
            source: Box::new(e),
        })
    };
    if workers == 1 {
        shards.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| shards.par_iter().map(run_one).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StdNormal;
    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, t: &[f64]) -> f64 {
            -0.5 * t[0] * t[0]
        }
    }

    struct HalfLine;
    impl LogDensity for HalfLine {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, t: &[f64]) -> f64 {
            if t[0] < 0.0 {
                f64::NEG_INFINITY
            } else {
                -t[0]
            }
        }
    }

    #[test]
    fn standard_normal_moments() {
        let cfg = MHConfig::new(1, 2.4, 50_000, 17);
        let out = run_mh(&StdNormal, TargetKind::FullPosterior, &[0.0], &cfg).unwrap();
        let mean = out.samples.mean()[0];
        let var = out.samples.std_dev()[0].powi(2);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn tiny_proposals_almost_always_accept() {
        let cfg = MHConfig::new(1, 1e-8, 5_000, 1);
        let out = run_mh(&StdNormal, TargetKind::FullPosterior, &[0.3], &cfg).unwrap();
        assert!(out.accept_rate > 0.999);
        assert!(out.samples.rows().all(|r| (r[0] - 0.3).abs() < 1e-5));
    }

    #[test]
    fn same_seed_same_chain() {
        let cfg = MHConfig::new(1, 1.0, 2_000, 99).with_adaptation(500);
        let a = run_mh(&StdNormal, TargetKind::FullPosterior, &[0.0], &cfg).unwrap();
        let b = run_mh(&StdNormal, TargetKind::FullPosterior, &[0.0], &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.accepted, b.accepted);
        assert_eq!(a.scale_factor, b.scale_factor);
    }

    #[test]
    fn init_outside_support_is_an_error() {
        let cfg = MHConfig::new(1, 1.0, 10, 0);
        assert!(matches!(
            run_mh(&HalfLine, TargetKind::FullPosterior, &[-1.0], &cfg),
            Err(Error::InitOutsideSupport(_))
        ));
    }

    #[test]
    fn out_of_support_proposals_are_counted_and_rejected() {
        let cfg = MHConfig::new(1, 5.0, 2_000, 3);
        let out = run_mh(&HalfLine, TargetKind::FullPosterior, &[1.0], &cfg).unwrap();
        assert!(out.non_finite > 0);
        assert!(out.samples.rows().all(|r| r[0] >= 0.0));
        assert_eq!(
            out.accepted,
            (out.accept_rate * cfg.iterations as f64).round() as u64
        );
    }

    #[test]
    fn adaptation_lands_in_band() {
        let cfg = MHConfig::new(1, 100.0, 20_000, 8).with_adaptation(3_000);
        let out = run_mh(&StdNormal, TargetKind::FullPosterior, &[0.0], &cfg).unwrap();
        assert!(out.scale_factor < 1.0);
        assert!((0.1..=0.45).contains(&out.accept_rate), "{}", out.accept_rate);
    }

    #[test]
    fn burn_in_floor_rule() {
        let s = Samples::new(1, (1..=6).map(f64::from).collect()).unwrap();
        let kept = remove_burn_in(&s, BURN_IN_FRACTION).unwrap();
        assert_eq!(kept.as_slice(), &[2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(remove_burn_in(&s, 0.0).unwrap(), s);
        let five = s.head(5);
        assert_eq!(remove_burn_in(&five, BURN_IN_FRACTION).unwrap().len(), 5);
        assert!(remove_burn_in(&Samples::empty(1), 0.1).is_err());
        assert!(remove_burn_in(&s, 1.0).is_err());
        for t in 0..1000 {
            assert_eq!(burn_in_count(t, BURN_IN_FRACTION), t / 6);
        }
    }

    /// Symmetric double well: both wells should be occupied equally.
    #[test]
    fn double_well_occupancy_is_symmetric() {
        struct DoubleWell;
        impl LogDensity for DoubleWell {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, t: &[f64]) -> f64 {
                let x = t[0];
                -(x * x - 1.0).powi(2) * 2.0
            }
        }
        let cfg = MHConfig::new(1, 1.0, 400_000, 21);
        let out = run_mh(&DoubleWell, TargetKind::FullPosterior, &[0.0], &cfg).unwrap();
        let right = out.samples.rows().filter(|r| r[0] > 0.0).count() as f64;
        let frac = right / out.samples.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "right-well fraction {frac}");
    }

    #[test]
    fn label_permutation_visits_both_orderings() {
        let model = ModelSpec::GaussianMixtureMeans {
            components: 2,
            data_dim: 1,
            component_var: 1.0,
            prior_var: 100.0,
        };
        let truth = crate::model::ParamVector::new(vec![-3.0, 3.0]).unwrap();
        let (ds, _) =
            crate::model::generate_synthetic(&model, 200, 2, Some(&truth), &Default::default())
                .unwrap();
        let target = Posterior::full(&model, &ds);
        let mut cfg = MHConfig::new(2, 0.2, 4_000, 5);
        cfg.permute_labels = true;
        let out = run_mh(&target, target.kind, &[-3.0, 3.0], &cfg).unwrap();
        let first_neg = out.samples.rows().filter(|r| r[0] < 0.0).count() as f64;
        let frac = first_neg / out.samples.len() as f64;
        assert!((0.4..0.6).contains(&frac), "{frac}");
    }
}
