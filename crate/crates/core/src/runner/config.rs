use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::combine::{BandwidthSchedule, Method};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParamVector, SyntheticOptions};
use crate::sampler::MHConfig;

/// Full description of an experiment. Every section except `model` has
/// defaults; see `crates/core/configs/*.toml` in the repository for complete files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "default_machines")]
    pub machines: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub combine: CombineConfig,
    #[serde(default)]
    pub groundtruth: GroundtruthConfig,
    /// Iterations of the single full-data chain used as the baseline.
    #[serde(default)]
    pub regular_chain_iterations: Option<usize>,
    /// Evaluation times in (modeled or measured) seconds, strictly increasing.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub clock: ClockConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_machines() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n: usize,
    pub seed: u64,
    pub partition_seed: u64,
    pub true_params: Option<Vec<f64>>,
    pub exposure_range: (f64, f64),
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            seed: 0,
            partition_seed: 0,
            true_params: None,
            exposure_range: SyntheticOptions::default().exposure_range,
        }
    }
}

impl DataConfig {
    pub fn true_params(&self) -> Result<Option<ParamVector>> {
        self.true_params.clone().map(ParamVector::new).transpose()
    }

    pub fn synthetic_options(&self) -> SyntheticOptions {
        SyntheticOptions {
            exposure_range: self.exposure_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Isotropic proposal standard deviation, used when `proposal_scales`
    /// is absent.
    pub proposal_scale: f64,
    pub proposal_scales: Option<Vec<f64>>,
    pub iterations: usize,
    pub adapt_iterations: usize,
    pub permute_labels: bool,
    pub init: Option<Vec<f64>>,
    /// Chain for machine `m` uses `seed + m`.
    pub seed: u64,
    /// Thread limit for the per-machine fan-out; 0 uses `SUBPOST_WORKERS`
    /// or all cores.
    pub workers: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            proposal_scale: 0.1,
            proposal_scales: None,
            iterations: 50_000,
            adapt_iterations: 2_000,
            permute_labels: false,
            init: None,
            seed: 1,
            workers: 0,
        }
    }
}

impl SamplerConfig {
    pub fn mh_config(&self, dim: usize) -> MHConfig {
        MHConfig {
            proposal_scale: self
                .proposal_scales
                .clone()
                .unwrap_or_else(|| vec![self.proposal_scale; dim]),
            iterations: self.iterations,
            seed: self.seed,
            adapt: self.adapt_iterations > 0,
            adapt_iterations: self.adapt_iterations,
            permute_labels: self.permute_labels,
            init: self.init.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombineConfig {
    pub methods: Vec<Method>,
    pub schedule: BandwidthSchedule,
    /// Output size; defaults to the smallest per-machine sample count.
    pub t_out: Option<usize>,
    pub seed: u64,
    /// Randomly permute component-label blocks of every combined draw.
    /// Only meaningful for models with exchangeable labels.
    pub permute_labels: bool,
}

impl Default for CombineConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::Parametric,
                Method::Nonparametric,
                Method::Semiparametric,
                Method::SubpostAvg,
                Method::SubpostPool,
            ],
            schedule: BandwidthSchedule::default(),
            t_out: None,
            seed: 7,
            permute_labels: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundtruthKind {
    /// Exact draws from the closed-form posterior (conjugate model only).
    Analytic,
    /// A long full-data chain.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundtruthConfig {
    pub kind: GroundtruthKind,
    pub iterations: usize,
    /// Number of exact draws for the analytic groundtruth.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GroundtruthConfig {
    fn default() -> Self {
        Self {
            kind: GroundtruthKind::Chain,
            iterations: 200_000,
            samples: 20_000,
            seed: 999,
        }
    }
}

/// How elapsed time is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClockConfig {
    /// Deterministic clock: scalar-operation counts times a fixed cost, and
    /// transfers at a fixed bandwidth.
    Work {
        seconds_per_op: f64,
        bytes_per_second: f64,
    },
    /// Wall-clock measurements of sampling, file transfer and combination.
    Measured,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig::Work {
            seconds_per_op: 1e-9,
            bytes_per_second: 1e8,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.machines == 0 {
            return bad("machines must be >= 1".into());
        }
        if self.machines > self.data.n {
            return bad(format!(
                "cannot split {} records over {} machines",
                self.data.n, self.machines
            ));
        }
        if self.sampler.iterations == 0 {
            return bad("sampler.iterations must be >= 1".into());
        }
        if let Some(s) = &self.sampler.proposal_scales {
            if s.len() != self.model.dim() {
                return bad(format!(
                    "sampler.proposal_scales has {} entries, model dimension is {}",
                    s.len(),
                    self.model.dim()
                ));
            }
        }
        if self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return bad("checkpoints must be strictly increasing".into());
        }
        if self.checkpoints.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return bad("checkpoints must be finite and nonnegative".into());
        }
        if self.combine.permute_labels && self.model.label_block().is_none() {
            return bad("combine.permute_labels needs a model with component labels".into());
        }
        if self.combine.methods.is_empty() {
            return bad("combine.methods is empty".into());
        }
        if self.groundtruth.kind == GroundtruthKind::Analytic
            && !matches!(self.model, ModelSpec::GaussianConjugate { .. })
        {
            return bad("analytic groundtruth requires the gaussian_conjugate model".into());
        }
        self.combine
            .schedule
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let ClockConfig::Work {
            seconds_per_op,
            bytes_per_second,
        } = self.clock
        {
            if !(seconds_per_op > 0.0 && bytes_per_second > 0.0) {
                return bad("clock costs must be positive".into());
            }
        }
        Ok(())
    }

    /// Worker limit: config value, else `SUBPOST_WORKERS`, else 0 (all cores).
    pub fn workers(&self) -> usize {
        if self.sampler.workers > 0 {
            return self.sampler.workers;
        }
        std::env::var(super::WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        kind = "gaussian_conjugate"
        prior_mean = [0.0, 0.0]
        prior_var = 100.0
        noise_var = 1.0
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.machines, 8);
        assert_eq!(cfg.data.n, 10_000);
        assert_eq!(cfg.sampler.iterations, 50_000);
        assert_eq!(cfg.groundtruth.iterations, 200_000);
        let round = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn rejects_non_increasing_checkpoints() {
        let text = format!("checkpoints = [1.0, 1.0]\n{MINIMAL}");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_unknown_method() {
        let text = format!("{MINIMAL}\n[combine]\nmethods = [\"magic\"]\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn analytic_groundtruth_needs_conjugate_model() {
        let text = r#"
            [model]
            kind = "logistic_regression"
            dim = 2
            prior_scale = 10.0
            [groundtruth]
            kind = "analytic"
        "#;
        assert!(ExperimentConfig::from_toml(text).is_err());
    }
}
