//! On-disk formats.
//!
//! Every matrix (datasets, shards, subposterior and combined samples) is a
//! headerless CSV file with one row per line. Each CSV has a TOML sidecar
//! next to it (`name.csv` -> `name.meta.toml`) describing provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::combine::BandwidthSchedule;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::samples::Samples;

pub fn write_matrix(path: &Path, samples: &Samples) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut fields = Vec::with_capacity(samples.dim());
    for row in samples.rows() {
        fields.clear();
        fields.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Samples> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out: Option<Samples> = None;
    let mut row = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        row.clear();
        for f in rec.iter() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("line {}: bad number `{f}`", line + 1)))?;
            row.push(v);
        }
        let s = out.get_or_insert_with(|| Samples::empty(row.len().max(1)));
        s.push(&row)
            .map_err(|_| Error::parse(path, format!("line {}: ragged row", line + 1)))?;
    }
    out.ok_or_else(|| Error::parse(path, "file has no rows"))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.toml")
}

pub fn write_meta<T: Serialize>(csv: &Path, meta: &T) -> Result<()> {
    let path = meta_path(csv);
    let text = toml::to_string_pretty(meta).map_err(|e| Error::parse(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_meta<T: DeserializeOwned>(csv: &Path) -> Result<T> {
    let path = meta_path(csv);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::parse(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: String,
    pub model_id: String,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub true_params: Vec<f64>,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardMeta {
    pub parent_id: String,
    pub shard_index: usize,
    pub shard_count: usize,
    pub n: usize,
    pub seed: u64,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub model_id: String,
    pub shard_index: usize,
    pub shard_count: usize,
    pub seed: u64,
    pub accept_rate: f64,
    pub wall_time: f64,
    pub samples: usize,
    pub burn_in_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedMeta {
    pub method: String,
    pub seed: u64,
    pub machines: usize,
    pub samples: usize,
    pub schedule: Option<BandwidthSchedule>,
    pub accept_rate: Option<f64>,
    pub weight_evals: u64,
    pub wall_time: f64,
}

pub fn dataset_file(dir: &Path) -> PathBuf {
    dir.join("dataset.csv")
}

pub fn shard_file(dir: &Path, m: usize, count: usize) -> PathBuf {
    dir.join(format!("shard_{m}_of_{count}.csv"))
}

pub fn subposterior_file(dir: &Path, m: usize, count: usize) -> PathBuf {
    dir.join(format!("subpost_{m}_of_{count}.csv"))
}

/// Load `subpost_1_of_M.csv ..= subpost_M_of_M.csv` from `dir`, failing if
/// any machine's file is missing. `M` is discovered from the directory.
pub fn read_subposteriors(dir: &Path) -> Result<Vec<(Samples, SampleMeta)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut count = None;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(m) = parse_subposterior_name(&name) {
            match count {
                None => count = Some(m.1),
                Some(c) if c != m.1 => {
                    return Err(Error::parse(
                        dir,
                        format!("mixed machine counts {c} and {} in one directory", m.1),
                    ))
                }
                _ => {}
            }
        }
    }
    let count = count.ok_or_else(|| Error::MissingFile(dir.join("subpost_1_of_M.csv")))?;
    (1..=count)
        .map(|m| {
            let path = subposterior_file(dir, m, count);
            let samples = read_matrix(&path)?;
            let meta: SampleMeta = read_meta(&path)?;
            Ok((samples, meta))
        })
        .collect()
}

fn parse_subposterior_name(name: &str) -> Option<(usize, usize)> {
    let body = name.strip_prefix("subpost_")?.strip_suffix(".csv")?;
    let (m, count) = body.split_once("_of_")?;
    Some((m.parse().ok()?, count.parse().ok()?))
}

/// One line of an error table. `l2_error` is `None` when the checkpoint
/// precedes the first usable sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub method: String,
    pub checkpoint: f64,
    pub time_seconds: f64,
    pub l2_error: Option<f64>,
    pub seed: u64,
}

const ERROR_HEADER: [&str; 5] = ["method", "time_seconds", "l2_error", "seed", "checkpoint"];

pub fn write_error_table(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(ERROR_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let l2 = r.l2_error.map_or_else(|| "NA".to_string(), |v| v.to_string());
        w.write_record([
            r.method.clone(),
            r.time_seconds.to_string(),
            l2,
            r.seed.to_string(),
            r.checkpoint.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_error_table(path: &Path) -> Result<Vec<ErrorRow>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::parse(path, format!("line {line}: bad number `{s}`")))
    };
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = i + 2;
            if rec.len() != ERROR_HEADER.len() {
                return Err(Error::parse(path, format!("line {line}: expected 5 fields")));
            }
            Ok(ErrorRow {
                method: rec[0].to_string(),
                time_seconds: num(&rec[1], line)?,
                l2_error: if &rec[2] == "NA" { None } else { Some(num(&rec[2], line)?) },
                seed: rec[3]
                    .parse()
                    .map_err(|_| Error::parse(path, format!("line {line}: bad seed")))?,
                checkpoint: num(&rec[4], line)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrix_round_trip(d in 1usize..5, vals in prop::collection::vec(-1e300f64..1e300, 1..60)) {
            let rows = vals.len() / d;
            prop_assume!(rows > 0);
            let s = Samples::new(d, vals[..rows * d].to_vec()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.csv");
            write_matrix(&p, &s).unwrap();
            prop_assert_eq!(read_matrix(&p).unwrap(), s);
        }
    }

    #[test]
    fn error_table_round_trip() {
        let rows = vec![
            ErrorRow {
                method: "parametric".into(),
                checkpoint: 0.5,
                time_seconds: 0.75,
                l2_error: Some(0.123),
                seed: 4,
            },
            ErrorRow {
                method: "regular_chain".into(),
                checkpoint: 0.1,
                time_seconds: 0.1,
                l2_error: None,
                seed: 4,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("errors.csv");
        write_error_table(&p, &rows).unwrap();
        assert_eq!(read_error_table(&p).unwrap(), rows);
    }

    #[test]
    fn missing_machine_fails_loudly() {
        let dir = tempfile::tempdir().unwrap();
        let s = Samples::new(1, vec![1.0, 2.0]).unwrap();
        let meta = SampleMeta {
            model_id: "x".into(),
            shard_index: 1,
            shard_count: 2,
            seed: 0,
            accept_rate: 0.5,
            wall_time: 0.0,
            samples: 2,
            burn_in_dropped: 0,
        };
        let p = subposterior_file(dir.path(), 1, 2);
        write_matrix(&p, &s).unwrap();
        write_meta(&p, &meta).unwrap();
        assert!(matches!(
            read_subposteriors(dir.path()),
            Err(Error::MissingFile(path)) if path.ends_with("subpost_2_of_2.csv")
        ));
    }

    #[test]
    fn ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_matrix(&p).is_err());
    }
}
