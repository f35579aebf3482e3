use std::time::Instant;

use rayon::prelude::*;

use super::img::{img_combine_nonparametric, img_combine_semiparametric, WeightMode};
use super::{check_sets, BandwidthSchedule, CombineResult, Method};
use crate::error::{Error, Result};
use crate::samples::Samples;

/// Combine sets two at a time: each round pairs neighbours (an odd set out
/// passes through untouched) and runs a two-machine IMG on every pair, until
/// one set is left. `M - 1` pair combinations in `ceil(log2 M)` rounds.
///
/// `method` picks the inner combiner: `Nonparametric`, `Semiparametric` or
/// `SemiparametricW`.
pub fn pairwise_combine(
    sets: &[Samples],
    t_out: usize,
    schedule: &BandwidthSchedule,
    seed: u64,
    method: Method,
) -> Result<CombineResult> {
    let start = Instant::now();
    check_sets(sets)?;
    let tag = match method {
        Method::Nonparametric | Method::PairwiseNonparametric => Method::PairwiseNonparametric,
        Method::Semiparametric
        | Method::SemiparametricW
        | Method::PairwiseSemiparametric => Method::PairwiseSemiparametric,
        other => {
            return Err(Error::InvalidArgument(format!(
                "pairwise recursion needs an IMG combiner, not {other}"
            )))
        }
    };
    let combine_pair = |pair: &[Samples], pair_seed: u64| -> Result<CombineResult> {
        match method {
            Method::Nonparametric | Method::PairwiseNonparametric => {
                img_combine_nonparametric(pair, t_out, schedule, pair_seed)
            }
            Method::SemiparametricW => {
                img_combine_semiparametric(pair, t_out, schedule, pair_seed, WeightMode::Nonparametric)
            }
            _ => img_combine_semiparametric(pair, t_out, schedule, pair_seed, WeightMode::Semiparametric),
        }
    };

    let mut current: Vec<Samples> = sets.to_vec();
    let (mut evals, mut ops, mut accepted, mut proposals) = (0u64, 0u64, 0.0, 0u64);
    let mut round = 0u64;
    while current.len() > 1 {
        let chunks: Vec<&[Samples]> = current.chunks(2).collect();
        let results: Vec<Result<Option<CombineResult>>> = chunks
            .par_iter()
            .enumerate()
            .map(|(k, chunk)| {
                if chunk.len() == 1 {
                    return Ok(None);
                }
                let pair_seed = seed
                    .wrapping_add(round.wrapping_mul(1_000_003))
                    .wrapping_add(k as u64);
                combine_pair(chunk, pair_seed).map(Some)
            })
            .collect();
        let mut next = Vec::with_capacity(chunks.len());
        for (chunk, res) in chunks.iter().zip(results) {
            match res? {
                Some(r) => {
                    evals += r.weight_evals;
                    ops += r.ops;
                    proposals += r.weight_evals;
                    accepted += r.accept_rate.unwrap_or(0.0) * r.weight_evals as f64;
                    next.push(r.samples);
                }
                None => next.push(chunk[0].clone()),
            }
        }
        current = next;
        round += 1;
    }
    Ok(CombineResult {
        samples: current.pop().expect("one set remains"),
        method: tag,
        accept_rate: (proposals > 0).then(|| accepted / proposals as f64),
        weight_evals: evals,
        ops,
        wall_time: start.elapsed().as_secs_f64(),
        origins: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(m: usize) -> Vec<Samples> {
        (0..m)
            .map(|k| Samples::new(1, (0..20).map(|i| ((i * 7 + k) % 13) as f64 * 0.1).collect()).unwrap())
            .collect()
    }

    #[test]
    fn single_set_passes_through() {
        let s = sets(1);
        let out = pairwise_combine(&s, 10, &BandwidthSchedule::annealed(), 0, Method::Nonparametric)
            .unwrap();
        assert_eq!(out.samples, s[0]);
        assert_eq!(out.weight_evals, 0);
    }

    #[test]
    fn counts_are_linear_in_m() {
        for m in [2usize, 3, 4, 5, 8] {
            let out = pairwise_combine(&sets(m), 50, &BandwidthSchedule::annealed(), 1, Method::Nonparametric)
                .unwrap();
            assert_eq!(out.weight_evals, 2 * 50 * (m as u64 - 1), "M = {m}");
            assert_eq!(out.samples.len(), 50);
        }
    }

    #[test]
    fn rejects_non_img_inner_method() {
        assert!(pairwise_combine(&sets(2), 5, &BandwidthSchedule::annealed(), 0, Method::SubpostAvg).is_err());
    }

    #[test]
    fn deterministic() {
        let s = sets(5);
        let run = || {
            pairwise_combine(&s, 40, &BandwidthSchedule::annealed(), 9, Method::Semiparametric).unwrap()
        };
        assert_eq!(run().samples, run().samples);
    }
}
