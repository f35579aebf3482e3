//! Combination strategies that turn M sets of subposterior draws into draws
//! from (an estimate of) their density product.

mod baselines;
mod gaussian;
mod img;
mod online;
mod pairwise;

pub use baselines::{subpost_avg, subpost_pool};
pub use gaussian::{
    fit_gaussian, gaussian_product, mvn_log_pdf, parametric_combine, GaussianFit, RunningMoments,
};
pub use img::{
    img_combine_nonparametric, img_combine_semiparametric, log_w, semiparametric_params,
    ComponentIndex, ImgChain, SemiparametricComponent, WeightMode,
};
pub use online::OnlineCombiner;
pub use pairwise::pairwise_combine;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samples::Samples;

/// Every combination strategy the toolkit offers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Parametric,
    Nonparametric,
    /// Semiparametric components weighted by `W`.
    Semiparametric,
    /// Semiparametric components weighted by the nonparametric `w`.
    SemiparametricW,
    PairwiseNonparametric,
    PairwiseSemiparametric,
    SubpostAvg,
    SubpostPool,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Parametric,
        Method::Nonparametric,
        Method::Semiparametric,
        Method::SemiparametricW,
        Method::PairwiseNonparametric,
        Method::PairwiseSemiparametric,
        Method::SubpostAvg,
        Method::SubpostPool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Parametric => "parametric",
            Method::Nonparametric => "nonparametric",
            Method::Semiparametric => "semiparametric",
            Method::SemiparametricW => "semiparametric_w",
            Method::PairwiseNonparametric => "pairwise_nonparametric",
            Method::PairwiseSemiparametric => "pairwise_semiparametric",
            Method::SubpostAvg => "subpost_avg",
            Method::SubpostPool => "subpost_pool",
        }
    }

    /// Whether the method targets the exact product as T grows.
    pub fn asymptotically_exact(self) -> bool {
        matches!(
            self,
            Method::Nonparametric
                | Method::Semiparametric
                | Method::SemiparametricW
                | Method::PairwiseNonparametric
                | Method::PairwiseSemiparametric
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown combination method `{s}`")))
    }
}

/// Output of any combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct CombineResult {
    pub samples: Samples,
    pub method: Method,
    /// IMG acceptance rate over all component proposals.
    pub accept_rate: Option<f64>,
    /// Number of proposed-component weight evaluations.
    pub weight_evals: u64,
    /// Modeled scalar-operation count.
    pub ops: u64,
    pub wall_time: f64,
    /// Source machine (1-based) of every row, for pooled output.
    pub origins: Option<Vec<usize>>,
}

/// How the kernel bandwidth evolves over IMG iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `h(i) = i^(-1/(4+d))`, annealed with the output index.
    Annealed,
    /// `h = T^(-1/(2 beta + d))`, fixed for the whole run.
    TheoremRate { beta: f64 },
    Constant { h: f64 },
}

/// Multiplier applied to the rule's bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthScale {
    Fixed(f64),
    /// Mean per-dimension standard deviation of the subposterior sets, which
    /// makes the rule act on standardized coordinates.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSchedule {
    #[serde(flatten)]
    pub rule: BandwidthRule,
    #[serde(default = "unit_scale")]
    pub scale: BandwidthScale,
}

fn unit_scale() -> BandwidthScale {
    BandwidthScale::Fixed(1.0)
}

impl Default for BandwidthSchedule {
    fn default() -> Self {
        Self::annealed()
    }
}

impl BandwidthSchedule {
    pub fn annealed() -> Self {
        Self {
            rule: BandwidthRule::Annealed,
            scale: unit_scale(),
        }
    }

    pub fn theorem_rate(beta: f64) -> Self {
        Self {
            rule: BandwidthRule::TheoremRate { beta },
            scale: unit_scale(),
        }
    }

    pub fn constant(h: f64) -> Self {
        Self {
            rule: BandwidthRule::Constant { h },
            scale: unit_scale(),
        }
    }

    pub fn with_scale(mut self, scale: BandwidthScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.rule {
            BandwidthRule::Annealed => true,
            BandwidthRule::TheoremRate { beta } => beta > 0.0,
            BandwidthRule::Constant { h } => h > 0.0 && h.is_finite(),
        } && match self.scale {
            BandwidthScale::Fixed(s) => s > 0.0 && s.is_finite(),
            BandwidthScale::Auto => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid bandwidth schedule {self:?}")))
        }
    }

    /// Bind the schedule to a concrete problem: dimension `d`, per-machine
    /// sample count `t` (for the fixed-rate rule) and the sets that define the
    /// automatic scale.
    pub fn resolve(&self, d: usize, t: usize, sets: &[Samples]) -> Bandwidth {
        let scale = match self.scale {
            BandwidthScale::Fixed(s) => s,
            BandwidthScale::Auto => auto_scale(sets),
        };
        Bandwidth {
            rule: self.rule,
            scale,
            d: d as f64,
            t: t.max(1) as f64,
        }
    }
}

fn auto_scale(sets: &[Samples]) -> f64 {
    let sds: Vec<f64> = sets
        .iter()
        .filter(|s| s.len() >= 2)
        .flat_map(|s| s.std_dev())
        .collect();
    let mean = sds.iter().sum::<f64>() / sds.len().max(1) as f64;
    if mean > 0.0 && mean.is_finite() {
        mean
    } else {
        1.0
    }
}

/// A schedule bound to a problem; maps the 1-based output index to `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    rule: BandwidthRule,
    scale: f64,
    d: f64,
    t: f64,
}

impl Bandwidth {
    pub fn at(&self, i: usize) -> f64 {
        let raw = match self.rule {
            BandwidthRule::Annealed => (i.max(1) as f64).powf(-1.0 / (4.0 + self.d)),
            BandwidthRule::TheoremRate { beta } => self.t.powf(-1.0 / (2.0 * beta + self.d)),
            BandwidthRule::Constant { h } => h,
        };
        raw * self.scale
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Shared validation: nonempty sets of a common dimension.
pub(crate) fn check_sets(sets: &[Samples]) -> Result<usize> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Empty("no subposterior sets given".into()))?;
    let d = first.dim();
    for (m, s) in sets.iter().enumerate() {
        if s.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.dim(),
            });
        }
        if s.is_empty() {
            return Err(Error::Empty(format!("subposterior set {} has no samples", m + 1)));
        }
    }
    Ok(d)
}

/// Run `method` on `sets`. `t_out` is ignored by `subpost_pool`, which
/// returns every input row.
pub fn combine(
    method: Method,
    sets: &[Samples],
    t_out: usize,
    schedule: &BandwidthSchedule,
    seed: u64,
) -> Result<CombineResult> {
    match method {
        Method::Parametric => {
            check_sets(sets)?;
            let fits = sets.iter().map(fit_gaussian).collect::<Result<Vec<_>>>()?;
            parametric_combine(&fits, t_out, seed)
        }
        Method::Nonparametric => img_combine_nonparametric(sets, t_out, schedule, seed),
        Method::Semiparametric => {
            img_combine_semiparametric(sets, t_out, schedule, seed, WeightMode::Semiparametric)
        }
        Method::SemiparametricW => {
            img_combine_semiparametric(sets, t_out, schedule, seed, WeightMode::Nonparametric)
        }
        Method::PairwiseNonparametric | Method::PairwiseSemiparametric => {
            pairwise_combine(sets, t_out, schedule, seed, method)
        }
        Method::SubpostAvg => subpost_avg(sets, seed),
        Method::SubpostPool => subpost_pool(sets),
    }
}

/// Apply an independent, uniformly random permutation of the `block`-wide
/// label blocks to every row. Leaves any label-exchangeable density
/// invariant, so it can follow any combiner when the target is a
/// mixture-model posterior with exchangeable component labels.
pub fn permute_label_blocks(samples: &Samples, block: usize, seed: u64) -> Result<Samples> {
    let d = samples.dim();
    if block == 0 || !d.is_multiple_of(block) {
        return Err(Error::InvalidArgument(format!(
            "label block {block} does not divide dimension {d}"
        )));
    }
    let k = d / block;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..k).collect();
    let mut out = Samples::with_capacity(d, samples.len());
    let mut row = vec![0.0; d];
    for r in samples.rows() {
        order.shuffle(&mut rng);
        for (dst, &src) in order.iter().enumerate() {
            row[dst * block..(dst + 1) * block].copy_from_slice(&r[src * block..(src + 1) * block]);
        }
        out.push(&row)?;
    }
    Ok(out)
}

/// Smallest per-machine sample count each method can work with.
pub fn min_samples(method: Method) -> usize {
    match method {
        Method::Parametric
        | Method::Semiparametric
        | Method::SemiparametricW
        | Method::PairwiseSemiparametric => 2,
        _ => 1,
    }
}

/// Default output size: the smallest per-machine sample count.
pub fn default_t_out(sets: &[Samples]) -> usize {
    sets.iter().map(Samples::len).min().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_permutation_keeps_blocks_intact() {
        let s = Samples::new(4, [1.0, 2.0, 3.0, 4.0].repeat(200)).unwrap();
        let p = permute_label_blocks(&s, 2, 9).unwrap();
        let swapped = p.rows().filter(|r| r == &[3.0, 4.0, 1.0, 2.0]).count();
        assert_eq!(p.rows().filter(|r| r == &[1.0, 2.0, 3.0, 4.0]).count() + swapped, 200);
        assert!((60..140).contains(&swapped), "{swapped}");
        assert!(permute_label_blocks(&s, 3, 9).is_err());
    }

    #[test]
    fn annealed_bandwidth_values() {
        let bw = BandwidthSchedule::annealed().resolve(1, 100, &[]);
        assert_eq!(bw.at(1), 1.0);
        assert!((bw.at(32) - 0.5).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for i in 1..500 {
            let h = bw.at(i);
            assert!(h > 0.0 && h <= prev);
            prev = h;
        }
    }

    #[test]
    fn theorem_rate_is_fixed() {
        let bw = BandwidthSchedule::theorem_rate(2.0).resolve(1, 32, &[]);
        assert!((bw.at(1) - 0.5).abs() < 1e-15);
        assert_eq!(bw.at(1), bw.at(1000));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn schedule_toml_shape() {
        let s: BandwidthSchedule = toml::from_str("rule = \"annealed\"\nscale = \"auto\"").unwrap();
        assert_eq!(s, BandwidthSchedule::annealed().with_scale(BandwidthScale::Auto));
        let s: BandwidthSchedule =
            toml::from_str("rule = \"theorem_rate\"\nbeta = 2.0\nscale = { fixed = 0.5 }").unwrap();
        assert_eq!(
            s,
            BandwidthSchedule::theorem_rate(2.0).with_scale(BandwidthScale::Fixed(0.5))
        );
    }
}
