use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subpost::combine::{combine, default_t_out, BandwidthSchedule, Method};
use subpost::estimate::{l2_distance, GridSpec};
use subpost::io::{self, CombinedMeta, DatasetMeta, SampleMeta, ShardMeta};
use subpost::model::{generate_synthetic, partition, DataShard, Dataset, ModelSpec};
use subpost::runner::{self, ExperimentConfig, SamplerConfig, WORKERS_ENV};
use subpost::sampler::{remove_burn_in, run_shard_chains, BURN_IN_FRACTION};
use subpost::{Error, Result, Samples};

#[derive(Parser)]
#[command(name = "subpost", version, about = "Embarrassingly parallel MCMC toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset from the model in a config file.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a dataset into M shards.
    Partition {
        /// Directory holding dataset.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "M", short = 'M')]
        machines: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one subposterior chain per shard.
    Sample {
        /// Directory holding shard_<m>_of_<M>.csv files.
        #[arg(long)]
        shards: PathBuf,
        /// Sampler settings are read from the `[sampler]` section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine subposterior sample files into one set of draws.
    Combine {
        /// Directory holding subpost_<m>_of_<M>.csv files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        t_out: Option<usize>,
        /// Bandwidth schedule is read from `[combine]`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// L2 distance from reference draws to one or more sample files.
    Evaluate {
        #[arg(long)]
        groundtruth: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline and error-vs-time table.
    Experiment(ExperimentArgs),
    /// Per-method, per-checkpoint summary of error tables.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        table: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Reseeds data, partition, sampling and combination.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated method list replacing `combine.methods`.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long = "M", short = 'M')]
    machines: Option<usize>,
    /// Comma-separated checkpoint times in seconds.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Thread limit for the sampling fan-out.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => generate(&config, seed, &out),
        Command::Partition {
            data,
            machines,
            seed,
            out,
        } => partition_cmd(&data, machines, seed, &out),
        Command::Sample {
            shards,
            config,
            seed,
            out,
        } => sample(&shards, config.as_deref(), seed, &out),
        Command::Combine {
            input,
            method,
            seed,
            t_out,
            config,
            out,
        } => combine_cmd(&input, method, seed, t_out, config.as_deref(), &out),
        Command::Evaluate {
            groundtruth,
            samples,
            out,
        } => evaluate(&groundtruth, &samples, out.as_deref()),
        Command::Experiment(args) => experiment(args),
        Command::Report { table, out } => report(&table, out.as_deref()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn generate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let seed = seed.unwrap_or(cfg.data.seed);
    let truth = cfg.data.true_params()?;
    let (dataset, truth) = generate_synthetic(
        &cfg.model,
        cfg.data.n,
        seed,
        truth.as_ref(),
        &cfg.data.synthetic_options(),
    )?;
    create_dir(out)?;
    let path = io::dataset_file(out);
    io::write_matrix(&path, &dataset.records)?;
    io::write_meta(
        &path,
        &DatasetMeta {
            id: dataset.id.clone(),
            model_id: dataset.model_id.clone(),
            n: dataset.len(),
            d: cfg.model.dim(),
            seed,
            true_params: truth.into_inner(),
            model: cfg.model,
        },
    )?;
    println!("wrote {} records to {}", dataset.len(), path.display());
    Ok(())
}

fn partition_cmd(data: &Path, machines: usize, seed: u64, out: &Path) -> Result<()> {
    let path = io::dataset_file(data);
    let meta: DatasetMeta = io::read_meta(&path)?;
    let dataset = Dataset::new(meta.id.clone(), meta.model_id.clone(), io::read_matrix(&path)?)?;
    let shards = partition(&dataset, machines, seed)?;
    create_dir(out)?;
    for shard in &shards {
        let file = io::shard_file(out, shard.index, shard.count);
        io::write_matrix(&file, &shard.records)?;
        io::write_meta(
            &file,
            &ShardMeta {
                parent_id: shard.parent_id.clone(),
                shard_index: shard.index,
                shard_count: shard.count,
                n: shard.records.len(),
                seed,
                model: meta.model.clone(),
            },
        )?;
    }
    println!("wrote {machines} shards to {}", out.display());
    Ok(())
}

fn read_shards(dir: &Path) -> Result<(ModelSpec, Vec<DataShard>)> {
    let first = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.starts_with("shard_") && name.ends_with(".csv")
        })
        .ok_or_else(|| Error::MissingFile(dir.join("shard_1_of_M.csv")))?;
    let meta: ShardMeta = io::read_meta(&first)?;
    let count = meta.shard_count;
    let shards = (1..=count)
        .map(|m| {
            let path = io::shard_file(dir, m, count);
            let records = io::read_matrix(&path)?;
            let meta: ShardMeta = io::read_meta(&path)?;
            Ok(DataShard {
                parent_id: meta.parent_id,
                index: m,
                count,
                source_rows: Vec::new(),
                records,
            })
        })
        .collect::<Result<_>>()?;
    Ok((meta.model, shards))
}

fn sample(shards: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let (model, shards) = read_shards(shards)?;
    let sampler = match config {
        Some(p) => ExperimentConfig::load(p)?.sampler,
        None => SamplerConfig::default(),
    };
    let seed = seed.unwrap_or(sampler.seed);
    let workers = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(sampler.workers);
    let chains = run_shard_chains(&model, &shards, &sampler.mh_config(model.dim()), seed, workers)?;
    create_dir(out)?;
    let count = shards.len();
    for (m, chain) in chains.iter().enumerate() {
        let kept = remove_burn_in(&chain.samples, BURN_IN_FRACTION)?;
        let path = io::subposterior_file(out, m + 1, count);
        io::write_matrix(&path, &kept)?;
        io::write_meta(
            &path,
            &SampleMeta {
                model_id: model.model_id().to_string(),
                shard_index: m + 1,
                shard_count: count,
                seed: chain.seed,
                accept_rate: chain.accept_rate,
                wall_time: chain.wall_time,
                samples: kept.len(),
                burn_in_dropped: chain.samples.len() - kept.len(),
            },
        )?;
        println!(
            "machine {}/{}: {} samples kept, acceptance {:.3}",
            m + 1,
            count,
            kept.len(),
            chain.accept_rate
        );
    }
    Ok(())
}

fn combine_cmd(
    input: &Path,
    method: Method,
    seed: u64,
    t_out: Option<usize>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let schedule = match config {
        Some(p) => ExperimentConfig::load(p)?.combine.schedule,
        None => BandwidthSchedule::default(),
    };
    let sets: Vec<Samples> = io::read_subposteriors(input)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let t_out = t_out.unwrap_or_else(|| default_t_out(&sets));
    let result = combine(method, &sets, t_out, &schedule, seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    io::write_matrix(out, &result.samples)?;
    io::write_meta(
        out,
        &CombinedMeta {
            method: method.name().to_string(),
            seed,
            machines: sets.len(),
            samples: result.samples.len(),
            schedule: Some(schedule),
            accept_rate: result.accept_rate,
            weight_evals: result.weight_evals,
            wall_time: result.wall_time,
        },
    )?;
    println!(
        "{}: {} samples from {} machines, {} weight evaluations",
        method,
        result.samples.len(),
        sets.len(),
        result.weight_evals
    );
    Ok(())
}

fn evaluate(groundtruth: &Path, samples: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let truth = io::read_matrix(groundtruth)?;
    let mut lines = vec!["file,l2_error".to_string()];
    for path in samples {
        let s = io::read_matrix(path)?;
        let d = l2_distance(&truth, &s, GridSpec::Auto)?;
        lines.push(format!("{},{d}", path.display()));
    }
    emit(&lines, out)
}

fn emit(lines: &[String], out: Option<&Path>) -> Result<()> {
    let text = lines.join("\n") + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Offset keeping the groundtruth chain's stream apart from the sampler's.
const GROUNDTRUTH_SEED_OFFSET: u64 = 1_000_003;

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.data.seed = seed;
        cfg.data.partition_seed = seed;
        cfg.sampler.seed = seed;
        cfg.combine.seed = seed;
        cfg.groundtruth.seed = seed.wrapping_add(GROUNDTRUTH_SEED_OFFSET);
    }
    if !args.method.is_empty() {
        cfg.combine.methods = args.method;
    }
    if let Some(m) = args.machines {
        cfg.machines = m;
    }
    if !args.checkpoints.is_empty() {
        cfg.checkpoints = args.checkpoints;
    }
    if let Some(w) = args.workers {
        cfg.sampler.workers = w;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    cfg.validate()?;

    let status = cfg.out_dir.as_ref().map(|d| d.join("STATUS"));
    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
        let s = dir.join("STATUS");
        fs::write(&s, "incomplete\n").map_err(|e| Error::io(&s, e))?;
    }
    let output = match runner::run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            if let Some(s) = &status {
                let _ = fs::write(s, format!("incomplete: {e}\n"));
            }
            return Err(e);
        }
    };
    if let Some(s) = &status {
        fs::write(s, "complete\n").map_err(|e| Error::io(s, e))?;
    }

    println!("method,l2_error,total_seconds");
    for b in &output.batch {
        let name = b.result.method.name();
        let total = output.ledger.total_seconds(name).unwrap_or(f64::NAN);
        println!("{name},{:.6},{:.6}", b.l2_error, total);
    }
    if cfg.out_dir.is_none() && !output.rows.is_empty() {
        println!();
        let lines: Vec<String> = std::iter::once("method,time_seconds,l2_error,checkpoint".to_string())
            .chain(output.rows.iter().map(|r| {
                let l2 = r.l2_error.map_or_else(|| "NA".into(), |v| v.to_string());
                format!("{},{},{l2},{}", r.method, r.time_seconds, r.checkpoint)
            }))
            .collect();
        emit(&lines, None)?;
    }
    Ok(())
}

fn report(tables: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for t in tables {
        rows.extend(io::read_error_table(t)?);
    }
    let summary = runner::summarize(&rows);
    match out {
        Some(p) => runner::write_summary(p, &summary),
        None => {
            println!("method,checkpoint,mean_time_seconds,mean_l2_error,runs,available");
            for s in &summary {
                let l2 = s.mean_l2_error.map_or_else(|| "NA".into(), |v| v.to_string());
                println!(
                    "{},{},{},{l2},{},{}",
                    s.method, s.checkpoint, s.mean_time_seconds, s.runs, s.available
                );
            }
            Ok(())
        }
    }
}
