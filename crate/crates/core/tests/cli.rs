use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use subpost::combine::{fit_gaussian, gaussian_product};
use subpost::io;

const CONFIG: &str = r#"
machines = 3
checkpoints = [0.002, 0.004]
[model]
kind = "gaussian_conjugate"
prior_mean = [0.0]
prior_var = 100.0
noise_var = 1.0
[data]
n = 600
seed = 1
partition_seed = 2
[sampler]
proposal_scale = 0.1
iterations = 1500
adapt_iterations = 200
seed = 3
[combine]
methods = ["parametric", "nonparametric", "subpost_avg"]
t_out = 500
seed = 4
[groundtruth]
kind = "analytic"
samples = 2000
seed = 5
"#;

fn subpost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subpost"))
        .args(args)
        .env_remove("SUBPOST_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = subpost(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.toml");
    fs::write(&config, CONFIG).unwrap();
    let (data, shards, subs) = (d.join("data"), d.join("shards"), d.join("subs"));
    ok(&["generate", "--config", s(&config), "--out", s(&data)]);
    ok(&["partition", "--data", s(&data), "--M", "3", "--seed", "2", "--out", s(&shards)]);
    ok(&["sample", "--shards", s(&shards), "--config", s(&config), "--out", s(&subs)]);
    for m in 1..=3 {
        assert!(io::subposterior_file(&subs, m, 3).exists());
    }
    let combined = d.join("combined.csv");
    ok(&[
        "combine", "--input", s(&subs), "--method", "nonparametric", "--t-out", "400", "--out",
        s(&combined),
    ]);
    assert_eq!(io::read_matrix(&combined).unwrap().len(), 400);

    let table = ok(&["evaluate", "--groundtruth", s(&combined), "--samples", s(&combined)]);
    let line = table.lines().nth(1).unwrap();
    let l2: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
    assert!(l2.abs() < 1e-9, "self distance {l2}");

    let exp = d.join("exp");
    ok(&["experiment", "--config", s(&config), "--out", s(&exp)]);
    assert_eq!(fs::read_to_string(exp.join("STATUS")).unwrap().trim(), "complete");
    let summary = d.join("summary.csv");
    ok(&["report", "--table", s(&exp.join("errors.csv")), "--out", s(&summary)]);
    let rows = fs::read_to_string(&summary).unwrap().lines().count() - 1;
    // Three methods plus the regular chain, two checkpoints each.
    assert_eq!(rows, 4 * 2);
}

#[test]
fn missing_machine_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.toml");
    fs::write(&config, CONFIG).unwrap();
    let (data, shards, subs) = (d.join("data"), d.join("shards"), d.join("subs"));
    ok(&["generate", "--config", s(&config), "--out", s(&data)]);
    ok(&["partition", "--data", s(&data), "--M", "3", "--out", s(&shards)]);
    ok(&["sample", "--shards", s(&shards), "--config", s(&config), "--out", s(&subs)]);
    fs::remove_file(io::subposterior_file(&subs, 2, 3)).unwrap();
    let out = subpost(&["combine", "--input", s(&subs), "--method", "parametric", "--out", s(&d.join("c.csv"))]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn single_machine_parametric_is_the_single_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.toml");
    fs::write(&config, CONFIG).unwrap();
    let (data, shards, subs) = (d.join("data"), d.join("shards"), d.join("subs"));
    ok(&["generate", "--config", s(&config), "--out", s(&data)]);
    ok(&["partition", "--data", s(&data), "--M", "1", "--out", s(&shards)]);
    ok(&["sample", "--shards", s(&shards), "--config", s(&config), "--out", s(&subs)]);
    let combined = d.join("c.csv");
    ok(&[
        "combine", "--input", s(&subs), "--method", "parametric", "--t-out", "20000", "--out",
        s(&combined),
    ]);
    let single = fit_gaussian(&io::read_matrix(&io::subposterior_file(&subs, 1, 1)).unwrap()).unwrap();
    assert_eq!(gaussian_product(std::slice::from_ref(&single)).unwrap().mean, single.mean);
    let draws = fit_gaussian(&io::read_matrix(&combined).unwrap()).unwrap();
    let sd = single.cov[(0, 0)].sqrt();
    assert!((draws.mean[0] - single.mean[0]).abs() < 0.05 * sd);
    assert!((draws.cov[(0, 0)] / single.cov[(0, 0)] - 1.0).abs() < 0.05);
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.toml");
    fs::write(&config, CONFIG).unwrap();
    let (a, b) = (d.join("a"), d.join("b"));
    ok(&["experiment", "--config", s(&config), "--seed", "77", "--out", s(&a)]);
    ok(&["experiment", "--config", s(&config), "--seed", "77", "--out", s(&b)]);
    assert_eq!(
        fs::read(a.join("errors.csv")).unwrap(),
        fs::read(b.join("errors.csv")).unwrap()
    );
}
