use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{ExperimentConfig, GroundtruthKind};
use super::timing::{Clock, TimingLedger};
use crate::combine::{combine, default_t_out, min_samples, permute_label_blocks, CombineResult, Method};
use crate::error::{Error, Result};
use crate::estimate::{l2_distance, GridSpec};
use crate::io::{self, CombinedMeta, DatasetMeta, ErrorRow, SampleMeta};
use crate::model::{generate_synthetic, partition, DataShard, Dataset, ModelSpec, ParamVector, Posterior};
use crate::sampler::{burn_in_count, remove_burn_in, run_mh, run_shard_chains, ChainOutput, BURN_IN_FRACTION};
use crate::samples::Samples;

/// Method label used for the single full-data chain in error tables.
pub const REGULAR_CHAIN: &str = "regular_chain";

/// Everything sampled before any combination happens.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dataset: Dataset,
    pub true_params: ParamVector,
    pub shards: Vec<DataShard>,
    /// Raw per-machine chains, burn-in still attached.
    pub chains: Vec<ChainOutput>,
    pub regular: ChainOutput,
    pub groundtruth: Samples,
}

impl Artifacts {
    /// Post-burn-in subposterior draws, one set per machine.
    pub fn subposterior_sets(&self) -> Result<Vec<Samples>> {
        self.chains
            .iter()
            .map(|c| remove_burn_in(&c.samples, BURN_IN_FRACTION))
            .collect()
    }
}

/// Batch result of one method on the full chains.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub result: CombineResult,
    pub l2_error: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub artifacts: Artifacts,
    pub batch: Vec<MethodOutcome>,
    pub ledger: TimingLedger,
    pub rows: Vec<ErrorRow>,
}

/// Generate, partition and sample: the shared front half of an experiment.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let model = &cfg.model;
    let truth = cfg.data.true_params()?;
    let (dataset, true_params) = generate_synthetic(
        model,
        cfg.data.n,
        cfg.data.seed,
        truth.as_ref(),
        &cfg.data.synthetic_options(),
    )?;
    let shards = partition(&dataset, cfg.machines, cfg.data.partition_seed)?;
    let mh = cfg.sampler.mh_config(model.dim());
    let chains = run_shard_chains(model, &shards, &mh, cfg.sampler.seed, cfg.workers())?;

    let mut regular_cfg = mh.clone();
    regular_cfg.iterations = cfg.regular_chain_iterations.unwrap_or(cfg.sampler.iterations);
    let regular = run_full_chain(model, &dataset, &regular_cfg)?;
    let groundtruth = groundtruth(cfg, &dataset)?;
    Ok(Artifacts {
        dataset,
        true_params,
        shards,
        chains,
        regular,
        groundtruth,
    })
}

fn run_full_chain(
    model: &ModelSpec,
    dataset: &Dataset,
    cfg: &crate::sampler::MHConfig,
) -> Result<ChainOutput> {
    let target = Posterior::full(model, dataset);
    let init = cfg.init.clone().unwrap_or_else(|| model.prior_mean());
    run_mh(&target, target.kind, &init, cfg)
}

/// Reference draws from the full posterior: exact for the conjugate model,
/// otherwise a long full-data chain with burn-in removed.
pub fn groundtruth(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Samples> {
    let gt = &cfg.groundtruth;
    match gt.kind {
        GroundtruthKind::Analytic => {
            let (mean, var) = cfg
                .model
                .conjugate_posterior(&dataset.records, 1.0)
                .ok_or_else(|| Error::Config("analytic groundtruth needs a conjugate model".into()))?;
            let sd = var.sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(gt.seed);
            let mut out = Samples::with_capacity(mean.len(), gt.samples);
            let mut row = vec![0.0; mean.len()];
            for _ in 0..gt.samples {
                for (r, m) in row.iter_mut().zip(&mean) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *r = m + sd * z;
                }
                out.push(&row)?;
            }
            Ok(out)
        }
        GroundtruthKind::Chain => {
            let mut mh = cfg.sampler.mh_config(cfg.model.dim());
            mh.iterations = gt.iterations;
            mh.seed = gt.seed;
            let chain = run_full_chain(&cfg.model, dataset, &mh)?;
            remove_burn_in(&chain.samples, BURN_IN_FRACTION)
        }
    }
}

/// Seed offset for the label permutation applied after combination.
const LABEL_SEED_OFFSET: u64 = 0x5EED;

/// Combine with the configured schedule, then symmetrize labels if asked.
fn run_method(cfg: &ExperimentConfig, method: Method, sets: &[Samples], t_out: usize) -> Result<CombineResult> {
    let seed = cfg.combine.seed;
    let mut result = combine(method, sets, t_out, &cfg.combine.schedule, seed)?;
    if let (true, Some(block)) = (cfg.combine.permute_labels, cfg.model.label_block()) {
        result.samples =
            permute_label_blocks(&result.samples, block, seed.wrapping_add(LABEL_SEED_OFFSET))?;
    }
    Ok(result)
}

/// Round trip the sets through CSV files in a scratch directory and return
/// the elapsed seconds, standing in for a network transfer.
fn measure_transfer(sets: &[Samples]) -> Result<f64> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let start = Instant::now();
    for (m, s) in sets.iter().enumerate() {
        let path = io::subposterior_file(dir.path(), m + 1, sets.len());
        io::write_matrix(&path, s)?;
        io::read_matrix(&path)?;
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Run the whole protocol: sampling, batch combination with every configured
/// method, and the error-vs-time table. Writes artifacts when `out_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let artifacts = prepare(cfg)?;
    let clock = Clock(cfg.clock);
    let sets = artifacts.subposterior_sets()?;
    let values: usize = sets.iter().map(|s| s.as_slice().len()).sum();
    let measured = if clock.is_measured() { measure_transfer(&sets)? } else { 0.0 };
    let machine_seconds = artifacts.chains.iter().map(|c| clock.chain_seconds(c)).collect();
    let mut ledger = TimingLedger::new(
        machine_seconds,
        clock.transfer_seconds(values, measured),
        clock.chain_seconds(&artifacts.regular),
    )?;

    let t_out = cfg.combine.t_out.unwrap_or_else(|| default_t_out(&sets));
    let batch: Vec<MethodOutcome> = cfg
        .combine
        .methods
        .par_iter()
        .map(|&method| {
            let result = run_method(cfg, method, &sets, t_out)?;
            let l2_error = l2_distance(&artifacts.groundtruth, &result.samples, GridSpec::Auto)?;
            Ok(MethodOutcome { result, l2_error })
        })
        .collect::<Result<_>>()?;
    for b in &batch {
        ledger.record_combine(b.result.method.name(), clock.combine_seconds(&b.result))?;
    }

    let rows = error_vs_time(cfg, &artifacts, measured / values.max(1) as f64)?;
    let output = ExperimentOutput {
        artifacts,
        batch,
        ledger,
        rows,
    };
    if let Some(dir) = &cfg.out_dir {
        write_outputs(cfg, &output, dir)?;
    }
    Ok(output)
}

/// Number of rows `chain` has produced by time `t`.
fn available(clock: &Clock, chain: &ChainOutput, t: f64) -> usize {
    let spi = clock.seconds_per_iteration(chain);
    let after = t - clock.adaptation_seconds(chain);
    if after < 0.0 || spi <= 0.0 {
        return if spi <= 0.0 { chain.samples.len() } else { 0 };
    }
    ((after / spi).floor() as usize).min(chain.samples.len())
}

fn kept(n: usize) -> usize {
    n - burn_in_count(n, BURN_IN_FRACTION)
}

/// One row per (checkpoint, method) plus one per checkpoint for the
/// full-data chain. `measured_per_value` scales measured transfer time to
/// the truncated sets; it is ignored by the work clock.
pub fn error_vs_time(
    cfg: &ExperimentConfig,
    artifacts: &Artifacts,
    measured_per_value: f64,
) -> Result<Vec<ErrorRow>> {
    let clock = Clock(cfg.clock);
    let seed = cfg.combine.seed;
    let mut rows = Vec::new();
    for &t in &cfg.checkpoints {
        let counts: Vec<usize> = artifacts
            .chains
            .iter()
            .map(|c| available(&clock, c, t))
            .collect();
        let fewest = counts.iter().map(|&n| kept(n)).min().unwrap_or(0);
        let truncated: Option<Vec<Samples>> = (fewest > 0)
            .then(|| {
                artifacts
                    .chains
                    .iter()
                    .zip(&counts)
                    .map(|(c, &n)| remove_burn_in(&c.samples.head(n), BURN_IN_FRACTION))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;

        let method_rows: Vec<ErrorRow> = cfg
            .combine
            .methods
            .par_iter()
            .map(|&method| {
                let unavailable = ErrorRow {
                    method: method.name().to_string(),
                    checkpoint: t,
                    time_seconds: t,
                    l2_error: None,
                    seed,
                };
                let Some(sets) = truncated.as_ref().filter(|_| fewest >= min_samples(method)) else {
                    return Ok(unavailable);
                };
                let t_out = cfg.combine.t_out.unwrap_or(fewest);
                let result = run_method(cfg, method, sets, t_out)?;
                let values: usize = sets.iter().map(|s| s.as_slice().len()).sum();
                let elapsed = t
                    + clock.transfer_seconds(values, measured_per_value * values as f64)
                    + clock.combine_seconds(&result);
                Ok(ErrorRow {
                    time_seconds: elapsed,
                    l2_error: Some(l2_distance(&artifacts.groundtruth, &result.samples, GridSpec::Auto)?),
                    ..unavailable
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(method_rows);

        let n = available(&clock, &artifacts.regular, t);
        let l2_error = if kept(n) > 0 {
            let s = remove_burn_in(&artifacts.regular.samples.head(n), BURN_IN_FRACTION)?;
            Some(l2_distance(&artifacts.groundtruth, &s, GridSpec::Auto)?)
        } else {
            None
        };
        rows.push(ErrorRow {
            method: REGULAR_CHAIN.to_string(),
            checkpoint: t,
            time_seconds: t,
            l2_error,
            seed,
        });
    }
    Ok(rows)
}

fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let a = &out.artifacts;
    let data_path = io::dataset_file(dir);
    io::write_matrix(&data_path, &a.dataset.records)?;
    io::write_meta(
        &data_path,
        &DatasetMeta {
            id: a.dataset.id.clone(),
            model_id: cfg.model.model_id().to_string(),
            n: a.dataset.len(),
            d: cfg.model.dim(),
            seed: cfg.data.seed,
            true_params: a.true_params.as_slice().to_vec(),
            model: cfg.model.clone(),
        },
    )?;
    let count = a.chains.len();
    for (m, chain) in a.chains.iter().enumerate() {
        let path = io::subposterior_file(dir, m + 1, count);
        let kept = remove_burn_in(&chain.samples, BURN_IN_FRACTION)?;
        io::write_matrix(&path, &kept)?;
        io::write_meta(
            &path,
            &SampleMeta {
                model_id: cfg.model.model_id().to_string(),
                shard_index: m + 1,
                shard_count: count,
                seed: chain.seed,
                accept_rate: chain.accept_rate,
                wall_time: chain.wall_time,
                samples: kept.len(),
                burn_in_dropped: chain.samples.len() - kept.len(),
            },
        )?;
    }
    io::write_matrix(&dir.join("groundtruth.csv"), &a.groundtruth)?;
    for b in &out.batch {
        let path = dir.join(format!("combined_{}.csv", b.result.method));
        io::write_matrix(&path, &b.result.samples)?;
        io::write_meta(&path, &combined_meta(&b.result, cfg, count))?;
    }
    io::write_error_table(&dir.join("errors.csv"), &out.rows)?;
    let timing = dir.join("timing.toml");
    let text = toml::to_string_pretty(&out.ledger).map_err(|e| Error::parse(&timing, e))?;
    fs::write(&timing, text).map_err(|e| Error::io(&timing, e))?;
    let config = dir.join("config.toml");
    fs::write(&config, cfg.to_toml()?).map_err(|e| Error::io(&config, e))
}

fn combined_meta(result: &CombineResult, cfg: &ExperimentConfig, machines: usize) -> CombinedMeta {
    let uses_schedule = !matches!(
        result.method,
        Method::Parametric | Method::SubpostAvg | Method::SubpostPool
    );
    CombinedMeta {
        method: result.method.name().to_string(),
        seed: cfg.combine.seed,
        machines,
        samples: result.samples.len(),
        schedule: uses_schedule.then_some(cfg.combine.schedule),
        accept_rate: result.accept_rate,
        weight_evals: result.weight_evals,
        wall_time: result.wall_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
            machines = 4
            checkpoints = [1e-9, 0.004, 1000.0]
            [model]
            kind = "gaussian_conjugate"
            prior_mean = [0.0]
            prior_var = 100.0
            noise_var = 1.0
            [data]
            n = 400
            seed = 3
            [sampler]
            proposal_scale = 0.1
            iterations = 1200
            adapt_iterations = 300
            [combine]
            methods = ["parametric", "nonparametric", "subpost_avg"]
            [groundtruth]
            kind = "analytic"
            samples = 2000
            "#,
        )
        .unwrap()
    }

    #[test]
    fn early_checkpoint_is_unavailable_and_late_one_saturates() {
        let cfg = small_config();
        let out = run_experiment(&cfg).unwrap();
        // 3 checkpoints x (3 methods + regular chain)
        assert_eq!(out.rows.len(), 12);
        assert!(out.rows[..4].iter().all(|r| r.l2_error.is_none()));
        for b in &out.batch {
            let last = out
                .rows
                .iter()
                .find(|r| r.checkpoint == 1000.0 && r.method == b.result.method.name())
                .unwrap();
            assert_eq!(last.l2_error, Some(b.l2_error));
        }
    }

    #[test]
    fn ledger_uses_slowest_machine() {
        let out = run_experiment(&small_config()).unwrap();
        let max = out.ledger.machine_seconds.iter().copied().fold(0.0, f64::max);
        assert_eq!(out.ledger.sampling_seconds, max);
        assert!(out.ledger.machine_seconds.iter().sum::<f64>() > max);
    }
}
