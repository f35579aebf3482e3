use serde::{Deserialize, Serialize};

use super::config::ClockConfig;
use crate::combine::CombineResult;
use crate::error::{Error, Result};
use crate::sampler::ChainOutput;

/// Bytes of one `f64` once written out, used by the bandwidth model.
const BYTES_PER_VALUE: f64 = 8.0;

/// Converts instrumentation into seconds under the configured clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clock(pub ClockConfig);

impl Clock {
    /// Seconds per post-adaptation iteration of `chain`.
    pub fn seconds_per_iteration(&self, chain: &ChainOutput) -> f64 {
        match self.0 {
            ClockConfig::Work { seconds_per_op, .. } => {
                let steps = (chain.samples.len() + chain.adapt_iterations).max(1);
                chain.ops as f64 * seconds_per_op / steps as f64
            }
            ClockConfig::Measured => chain.seconds_per_iteration(),
        }
    }

    /// Seconds spent on `chain` before its first retained sample.
    pub fn adaptation_seconds(&self, chain: &ChainOutput) -> f64 {
        self.seconds_per_iteration(chain) * chain.adapt_iterations as f64
    }

    pub fn chain_seconds(&self, chain: &ChainOutput) -> f64 {
        self.seconds_per_iteration(chain) * (chain.samples.len() + chain.adapt_iterations) as f64
    }

    pub fn combine_seconds(&self, result: &CombineResult) -> f64 {
        match self.0 {
            ClockConfig::Work { seconds_per_op, .. } => result.ops as f64 * seconds_per_op,
            ClockConfig::Measured => result.wall_time,
        }
    }

    /// Transfer time for `values` scalars under the bandwidth model, or the
    /// supplied measurement under the measured clock.
    pub fn transfer_seconds(&self, values: usize, measured: f64) -> f64 {
        match self.0 {
            ClockConfig::Work {
                bytes_per_second, ..
            } => values as f64 * BYTES_PER_VALUE / bytes_per_second,
            ClockConfig::Measured => measured,
        }
    }

    pub fn is_measured(&self) -> bool {
        matches!(self.0, ClockConfig::Measured)
    }
}

/// Per-phase times of one batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLedger {
    /// Per-machine chain times.
    pub machine_seconds: Vec<f64>,
    /// Parallel sampling phase: the slowest machine.
    pub sampling_seconds: f64,
    pub transfer_seconds: f64,
    /// Combination time per method, in configuration order.
    pub combine_seconds: Vec<(String, f64)>,
    pub regular_chain_seconds: f64,
}

impl TimingLedger {
    pub fn new(machine_seconds: Vec<f64>, transfer_seconds: f64, regular_chain_seconds: f64) -> Result<Self> {
        let bad = machine_seconds
            .iter()
            .chain([&transfer_seconds, &regular_chain_seconds])
            .any(|t| !(t.is_finite() && *t >= 0.0));
        if bad {
            return Err(Error::InvalidArgument("phase times must be finite and nonnegative".into()));
        }
        let sampling_seconds = machine_seconds.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            machine_seconds,
            sampling_seconds,
            transfer_seconds,
            combine_seconds: Vec::new(),
            regular_chain_seconds,
        })
    }

    pub fn record_combine(&mut self, method: &str, seconds: f64) -> Result<()> {
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(Error::InvalidArgument(format!("combine time {seconds} for {method}")));
        }
        self.combine_seconds.push((method.to_string(), seconds));
        Ok(())
    }

    /// End-to-end parallel time of `method`: sampling, transfer, combination.
    pub fn total_seconds(&self, method: &str) -> Option<f64> {
        self.combine_seconds
            .iter()
            .find(|(m, _)| m == method)
            .map(|(_, c)| self.sampling_seconds + self.transfer_seconds + c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_phase_is_max_not_sum() {
        let mut ledger = TimingLedger::new(vec![1.0, 3.0, 2.0], 0.5, 10.0).unwrap();
        assert_eq!(ledger.sampling_seconds, 3.0);
        ledger.record_combine("parametric", 0.25).unwrap();
        assert_eq!(ledger.total_seconds("parametric"), Some(3.75));
        assert_eq!(ledger.total_seconds("nonparametric"), None);
    }

    #[test]
    fn negative_times_rejected() {
        assert!(TimingLedger::new(vec![1.0, -1.0], 0.0, 0.0).is_err());
        let mut ledger = TimingLedger::new(vec![1.0], 0.0, 0.0).unwrap();
        assert!(ledger.record_combine("x", f64::NAN).is_err());
    }

    #[test]
    fn bandwidth_model_transfer() {
        let clock = Clock(ClockConfig::Work {
            seconds_per_op: 1e-9,
            bytes_per_second: 800.0,
        });
        assert_eq!(clock.transfer_seconds(100, 99.0), 1.0);
        assert_eq!(Clock(ClockConfig::Measured).transfer_seconds(100, 0.25), 0.25);
    }
}
