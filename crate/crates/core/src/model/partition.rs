use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataShard, Dataset};
use crate::error::{Error, Result};
use crate::samples::Samples;

/// Split `dataset` into `shards` disjoint pieces: a seeded uniform permutation
/// of the rows cut into contiguous blocks whose sizes differ by at most one.
pub fn partition(dataset: &Dataset, shards: usize, seed: u64) -> Result<Vec<DataShard>> {
    let n = dataset.len();
    if shards == 0 || shards > n {
        return Err(Error::BadPartition { records: n, shards });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n / shards;
    let extra = n % shards;
    let width = dataset.records.dim();
    let mut out = Vec::with_capacity(shards);
    let mut start = 0;
    for m in 0..shards {
        let size = base + usize::from(m < extra);
        let rows = order[start..start + size].to_vec();
        start += size;
        let mut records = Samples::with_capacity(width, size);
        for &r in &rows {
            records.push(dataset.records.row(r))?;
        }
        out.push(DataShard {
            parent_id: dataset.id.clone(),
            index: m + 1,
            count: shards,
            records,
            source_rows: rows,
        });
    }
    Ok(out)
}
