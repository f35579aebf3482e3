//! Experiment orchestration: configuration, the error-vs-time protocol,
//! timing accounting and summaries.

mod config;
mod experiment;
mod report;
mod timing;

pub use config::{
    ClockConfig, CombineConfig, DataConfig, ExperimentConfig, GroundtruthConfig, GroundtruthKind,
    SamplerConfig,
};
pub use experiment::{
    error_vs_time, groundtruth, prepare, run_experiment, Artifacts, ExperimentOutput, MethodOutcome,
    REGULAR_CHAIN,
};
pub use report::{summarize, write_summary, SummaryRow};
pub use timing::{Clock, TimingLedger};

/// Environment variable limiting the number of sampling threads.
pub const WORKERS_ENV: &str = "SUBPOST_WORKERS";
