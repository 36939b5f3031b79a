#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use launchpulse::linalg::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-12, "singular oracle system");
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                for j in 0..n {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Normal-equation coefficients and the HC1 sandwich, written out longhand.
pub fn oracle_ols(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for i in 0..n {
        for a in 0..k {
            xty[a] += x[i][a] * y[i];
            for b in 0..k {
                xtx[a][b] += x[i][a] * x[i][b];
            }
        }
    }
    let bread = invert(xtx);
    let beta: Vec<f64> = (0..k).map(|a| (0..k).map(|b| bread[a][b] * xty[b]).sum()).collect();
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..k).map(|a| x[i][a] * beta[a]).sum::<f64>())
        .collect();
    let mut meat = vec![vec![0.0; k]; k];
    for i in 0..n {
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += resid[i] * resid[i] * x[i][a] * x[i][b];
            }
        }
    }
    let scale = n as f64 / (n - k) as f64;
    let mut cov = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            for c in 0..k {
                for d in 0..k {
                    s += bread[a][c] * meat[c][d] * bread[d][b];
                }
            }
            cov[a][b] = scale * s;
        }
    }
    (beta, cov)
}

/// Intercept column plus `k - 1` standard-normal predictors; the response is
/// linear with heteroskedastic noise.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    for _ in 0..n {
        let mut row = vec![1.0];
        for _ in 1..k {
            row.push(rng.sample::<f64, _>(StandardNormal));
        }
        let noise: f64 = rng.sample(StandardNormal);
        let mean: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        y.push(mean + noise * (0.5 + row.get(1).copied().unwrap_or(0.0).abs()));
        rows.push(row);
    }
    (rows, y)
}

pub fn matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_launchpulse")
}

pub fn shipped_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

pub fn shipped_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus.toml")
}

/// Runs the binary with data, out and cache roots under `root`.
pub fn run_cli(root: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .arg("--data-dir")
        .arg(root.join("data"))
        .arg("--out-dir")
        .arg(root.join("out"))
        .arg("--cache-dir")
        .arg(root.join("cache"))
        .env_remove("LAUNCHPULSE_CACHE_DIR")
        .env_remove("GITHUB_TOKEN")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Relative path to file bytes for every file under `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    if dir.exists() {
        walk(dir, dir, &mut out);
    }
    out
}

/// Names of files whose bytes differ between two snapshots.
pub fn diff(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut names: Vec<String> = a.keys().chain(b.keys()).cloned().collect();
    names.sort();
    names.dedup();
    names.into_iter().filter(|k| a.get(k) != b.get(k)).collect()
}
