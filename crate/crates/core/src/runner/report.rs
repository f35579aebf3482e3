use std::path::Path;

use crate::error::{Error, Result};
use crate::io::ErrorRow;

/// Aggregate of all runs of one method at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub checkpoint: f64,
    pub mean_time_seconds: f64,
    /// Mean over runs with an available error; `None` if there were none.
    pub mean_l2_error: Option<f64>,
    pub runs: usize,
    pub available: usize,
}

/// Group rows by (method, checkpoint) in first-appearance order.
pub fn summarize(rows: &[ErrorRow]) -> Vec<SummaryRow> {
    let mut out: Vec<(SummaryRow, f64)> = Vec::new();
    for r in rows {
        let idx = out
            .iter()
            .position(|(s, _)| s.method == r.method && s.checkpoint == r.checkpoint)
            .unwrap_or_else(|| {
                out.push((
                    SummaryRow {
                        method: r.method.clone(),
                        checkpoint: r.checkpoint,
                        mean_time_seconds: 0.0,
                        mean_l2_error: None,
                        runs: 0,
                        available: 0,
                    },
                    0.0,
                ));
                out.len() - 1
            });
        let (s, l2_sum) = &mut out[idx];
        s.runs += 1;
        s.mean_time_seconds += r.time_seconds;
        if let Some(e) = r.l2_error {
            s.available += 1;
            *l2_sum += e;
        }
    }
    out.into_iter()
        .map(|(mut s, l2_sum)| {
            s.mean_time_seconds /= s.runs as f64;
            s.mean_l2_error = (s.available > 0).then(|| l2_sum / s.available as f64);
            s
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    let io_err = |e: csv::Error| Error::parse(path, e);
    w.write_record(["method", "checkpoint", "mean_time_seconds", "mean_l2_error", "runs", "available"])
        .map_err(io_err)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.checkpoint.to_string(),
            r.mean_time_seconds.to_string(),
            r.mean_l2_error.map_or_else(|| "NA".into(), |v| v.to_string()),
            r.runs.to_string(),
            r.available.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
