use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_sets, CombineResult, Method};
use crate::error::Result;
use crate::samples::Samples;

/// Average one draw from every machine per output row. Each set's rows are
/// shuffled independently first; all sets are truncated to the shortest.
pub fn subpost_avg(sets: &[Samples], seed: u64) -> Result<CombineResult> {
    let start = Instant::now();
    let d = check_sets(sets)?;
    let t = sets.iter().map(Samples::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders: Vec<Vec<usize>> = sets
        .iter()
        .map(|_| {
            let mut o: Vec<usize> = (0..t).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let m = sets.len() as f64;
    let mut out = Samples::with_capacity(d, t);
    let mut row = vec![0.0; d];
    for i in 0..t {
        row.iter_mut().for_each(|v| *v = 0.0);
        for (s, o) in sets.iter().zip(&orders) {
            for (acc, x) in row.iter_mut().zip(s.row(o[i])) {
                *acc += x;
            }
        }
        row.iter_mut().for_each(|v| *v /= m);
        out.push(&row)?;
    }
    Ok(CombineResult {
        samples: out,
        method: Method::SubpostAvg,
        accept_rate: None,
        weight_evals: 0,
        ops: (t * sets.len() * d) as u64,
        wall_time: start.elapsed().as_secs_f64(),
        origins: None,
    })
}

/// Concatenate all sets, remembering which machine each row came from.
pub fn subpost_pool(sets: &[Samples]) -> Result<CombineResult> {
    let start = Instant::now();
    let d = check_sets(sets)?;
    let total: usize = sets.iter().map(Samples::len).sum();
    let mut out = Samples::with_capacity(d, total);
    let mut origins = Vec::with_capacity(total);
    for (m, s) in sets.iter().enumerate() {
        for r in s.rows() {
            out.push(r)?;
            origins.push(m + 1);
        }
    }
    Ok(CombineResult {
        samples: out,
        method: Method::SubpostPool,
        accept_rate: None,
        weight_evals: 0,
        ops: (total * d) as u64,
        wall_time: start.elapsed().as_secs_f64(),
        origins: Some(origins),
    })
}
