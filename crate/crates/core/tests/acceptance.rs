//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails. Run with `--nocapture` to see the lines.

mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::TimeZone;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use launchpulse::align::{AlignedSeries, Horizon, WINDOW_HOURS};
use launchpulse::eventstudy::{event_curve, Statistic};
use launchpulse::features::{hour_bin, HOUR_BIN_LABELS};
use launchpulse::http::{RateBudget, RateLimiter};
use launchpulse::inference::{hc1_covariance, ols_fit};
use launchpulse::learn::enet::{elastic_net_fit, lambda_max, ElasticNetModel};
use launchpulse::learn::gbt::{gbt_fit, predict_with_trees, GbtParams};
use launchpulse::learn::split::{split_indices, test_size};
use launchpulse::linalg::Matrix;
use launchpulse::model::{read_jsonl, DataLayout};
use launchpulse::pipeline::{Pipeline, RunConfig};
use launchpulse::report::table::Table;
use launchpulse::report::OutLayout;
use launchpulse::synth::{verify_against_manifest, GroundTruth, SynthSpec};
use launchpulse::time::{Clock, SimClock};

type Check = Result<String, String>;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else {
        "non-string panic".into()
    }
}

fn criterion(name: &'static str, budget: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(p.as_ref()))));
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over the {:?} budget", budget)),
        Err(e) => (false, e),
    };
    let line = format!(
        "{} {name} ({:.2}s): {detail}",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    println!("{line}");
    Outcome { name, passed, detail }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ols_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let k = rng.random_range(1..=6);
        let n = rng.random_range(k + 4..=40);
        let (rows, y) = common::random_problem(&mut rng, n, k);
        let x = common::matrix(&rows);
        let fit = ols_fit(&x, &y).map_err(|e| format!("case {case}: {e}"))?;
        let cov = hc1_covariance(&x, &fit.residuals).map_err(|e| format!("case {case}: {e}"))?;
        let (beta, oracle_cov) = common::oracle_ols(&rows, &y);
        for a in 0..k {
            worst = worst.max((fit.coefficients[a] - beta[a]).abs());
            for b in 0..k {
                worst = worst.max((cov[(a, b)] - oracle_cov[a][b]).abs());
            }
        }
    }
    ensure(worst <= 1e-8, || format!("max deviation {worst:e} exceeds 1e-8"))?;
    Ok(format!("50 problems, max deviation {worst:.1e}"))
}

fn kkt_residual(model: &ElasticNetModel, x: &Matrix, y: &[f64]) -> f64 {
    let z = model.standardization.apply(x);
    let n = y.len() as f64;
    let fitted = z.matvec(&model.std_coefficients);
    let r: Vec<f64> = y.iter().zip(&fitted).map(|(v, f)| v - model.y_mean - f).collect();
    let (lam, a) = (model.lambda, model.l1_ratio);
    let mut worst = 0.0f64;
    for (j, &b) in model.std_coefficients.iter().enumerate() {
        if model.standardization.scales[j] == 0.0 {
            continue;
        }
        let g = z.column(j).iter().zip(&r).map(|(zi, ri)| zi * ri).sum::<f64>() / n - lam * (1.0 - a) * b;
        let v = if b != 0.0 {
            (g - lam * a * b.signum()).abs()
        } else {
            (g.abs() - lam * a).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn enet_limits() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut ols_dev = 0.0f64;
    let mut kkt = 0.0f64;
    for case in 0..20 {
        let k = rng.random_range(2..=7);
        let n = rng.random_range(k + 10..=60);
        let (rows, y) = common::random_problem(&mut rng, n, k);
        let slopes: Vec<Vec<f64>> = rows.iter().map(|r| r[1..].to_vec()).collect();
        let x = common::matrix(&slopes);

        let m0 = elastic_net_fit(&x, &y, 0.0, 0.5, 1e-12, 200_000).map_err(|e| e.to_string())?;
        let (beta, _) = common::oracle_ols(&rows, &y);
        ols_dev = ols_dev.max((m0.intercept - beta[0]).abs());
        for j in 0..k - 1 {
            ols_dev = ols_dev.max((m0.coefficients[j] - beta[j + 1]).abs());
        }

        let lmax = lambda_max(&x, &y, 1.0);
        for scale in [1.0, 1.5] {
            let m = elastic_net_fit(&x, &y, lmax * scale, 1.0, 1e-7, 10_000).map_err(|e| e.to_string())?;
            ensure(m.coefficients.iter().all(|&b| b == 0.0), || {
                format!(
                    "case {case}: slopes {:?} at lambda {:.3}x lambda_max",
                    m.coefficients, scale
                )
            })?;
        }

        let alpha = [0.1, 0.5, 0.9, 1.0][case % 4];
        let lam = lambda_max(&x, &y, alpha) * rng.random_range(0.01..0.8);
        let m = elastic_net_fit(&x, &y, lam, alpha, 1e-7, 10_000).map_err(|e| e.to_string())?;
        kkt = kkt.max(kkt_residual(&m, &x, &y));
    }
    ensure(ols_dev <= 1e-6, || format!("lambda=0 deviates from OLS by {ols_dev:e}"))?;
    ensure(kkt <= 1e-5, || format!("KKT residual {kkt:e} exceeds 1e-5"))?;
    Ok(format!(
        "OLS deviation {ols_dev:.1e}, max KKT residual {kkt:.1e}, lambda_max zeroes slopes"
    ))
}

fn gbt_monotone() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..10 {
        let p = rng.random_range(1..=5);
        let n = rng.random_range(30..=90);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let r: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let noise: f64 = rng.sample(StandardNormal);
            y.push(r[0].sin() * 3.0 + r.iter().map(|v| v * v).sum::<f64>() + noise);
            rows.push(r);
        }
        let x = common::matrix(&rows);
        let params = GbtParams {
            n_trees: 120,
            ..GbtParams::default()
        };
        let m = gbt_fit(&x, &y, params).map_err(|e| e.to_string())?;
        for (t, w) in m.train_mse.windows(2).enumerate() {
            ensure(w[1] <= w[0], || {
                format!("dataset {case}: MSE rose at tree {} ({} -> {})", t + 1, w[0], w[1])
            })?;
        }
        for k in [0, 1, 10, m.trees.len()] {
            let mse = (0..n)
                .map(|i| (y[i] - predict_with_trees(&m, x.row(i), k)).powi(2))
                .sum::<f64>()
                / n as f64;
            ensure((mse - m.train_mse[k]).abs() <= 1e-9 * (1.0 + mse), || {
                format!("dataset {case}: replayed MSE after {k} trees disagrees")
            })?;
        }
    }
    let x = common::matrix(&(1..=6).map(|v| vec![v as f64]).collect::<Vec<_>>());
    let y = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
    let params = GbtParams {
        n_trees: 1,
        learning_rate: 1.0,
        max_depth: 1,
        min_leaf: 1,
        seed: 0,
    };
    let m = gbt_fit(&x, &y, params).map_err(|e| e.to_string())?;
    for i in 0..6 {
        let p = predict_with_trees(&m, x.row(i), 1);
        ensure(p == y[i], || {
            format!("single split predicts {p} for row {i}, want {}", y[i])
        })?;
    }
    Ok("10 datasets non-increasing, single split exact".into())
}

fn synth_closed_loop() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec {
        n_repos: 200,
        seed: 99,
        ..SynthSpec::default()
    };
    let config = RunConfig::with_dirs(dir.path().join("data"), dir.path().join("out"));
    let pipeline = Pipeline::new(config.clone());
    pipeline.run_synth(&spec).map_err(|e| e.to_string())?;

    let data = DataLayout::new(&config.data_dir);
    let truth = GroundTruth::load(&data.synth_manifest()).map_err(|e| e.to_string())?;
    let verdict =
        verify_against_manifest(&data, &OutLayout::new(&config.out_dir), &truth).map_err(|e| e.to_string())?;
    ensure(verdict.passed(), || verdict.failures.join("; "))?;

    let series: Vec<AlignedSeries> = read_jsonl(&data.series()).map_err(|e| e.to_string())?;
    let curve = event_curve(&series, Statistic::Mean).map_err(|e| e.to_string())?;
    let valid: Vec<_> = truth.valid_repos().collect();
    let mut worst = 0.0f64;
    for d in 0..curve.values.len() {
        let brute = valid
            .iter()
            .map(|r| r.daily[..=d].iter().map(|&v| v as f64).sum::<f64>())
            .sum::<f64>()
            / valid.len() as f64;
        worst = worst.max((curve.values[d] - brute).abs());
    }
    ensure(worst <= 1e-9, || format!("event curve deviates by {worst:e}"))?;
    Ok(format!(
        "{} checks exact, curve deviation {worst:.1e}, importance order {:?} recovered",
        verdict.checks, truth.importance_order
    ))
}

fn split_contract(out: &Path, data: &Path) -> Check {
    let rows = Table::read(&DataLayout::new(data).feature_rows()).map_err(|e| e.to_string())?;
    ensure(rows.rows.len() == 138, || {
        format!("fixture has {} feature rows", rows.rows.len())
    })?;
    ensure(test_size(138, 0.8) == 28, || "test_size(138, 0.8) != 28".into())?;
    let (train, test) = split_indices(138, 0.8, 42).map_err(|e| e.to_string())?;
    ensure(train.len() == 110 && test.len() == 28, || {
        format!("split {}/{}", train.len(), test.len())
    })?;
    let perf = Table::read(&OutLayout::new(out).table("model_performance")).map_err(|e| e.to_string())?;
    ensure(!perf.rows.is_empty(), || "no model rows".into())?;
    for r in &perf.rows {
        ensure(perf.get(r, "test_n") == Some("28"), || {
            format!("row {r:?} has test_n != 28")
        })?;
    }
    Ok(format!(
        "138 rows -> 110/28; {} model rows report test_n 28",
        perf.rows.len()
    ))
}

fn hour_bins() -> Check {
    for h in 0..24u32 {
        let b = hour_bin(h).map_err(|e| e.to_string())?;
        let label = HOUR_BIN_LABELS[b as usize];
        let lo: u32 = label[..2].parse().unwrap();
        let hi: u32 = label[3..].parse().unwrap();
        ensure(lo <= h && h <= hi, || format!("hour {h} mapped to {label}"))?;
    }
    ensure(hour_bin(24).is_err(), || "hour 24 accepted".into())?;
    Ok(format!("24 hours over {:?}", HOUR_BIN_LABELS))
}

fn rate_limiter() -> Check {
    let start = chrono::Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let budget = RateBudget {
        max_requests: 30,
        window: Duration::from_secs(60),
    };
    let window = chrono::Duration::seconds(60);
    let check = |admitted: &mut Vec<chrono::DateTime<chrono::Utc>>| -> Result<(), String> {
        admitted.sort();
        for (i, &t) in admitted.iter().enumerate() {
            let in_window = admitted[..=i].iter().filter(|&&s| s > t - window).count();
            ensure(in_window <= 30, || {
                format!("{in_window} requests in the window ending {t}")
            })?;
        }
        Ok(())
    };

    let clock = Arc::new(SimClock::new(start));
    let limiter = RateLimiter::new(budget, clock.clone());
    let mut admitted = Vec::new();
    for i in 0..1000 {
        if i % 7 == 0 {
            clock.sleep(Duration::from_millis(900));
        }
        admitted.push(limiter.acquire());
    }
    check(&mut admitted)?;

    let clock = Arc::new(SimClock::new(start));
    let limiter = RateLimiter::new(budget, clock.clone());
    let admitted = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..4 {
            s.spawn(|| {
                for _ in 0..250 {
                    let t = limiter.acquire();
                    admitted.lock().unwrap().push(t);
                }
            });
        }
    });
    let mut admitted = admitted.into_inner().unwrap();
    ensure(admitted.len() == 1000, || "lost requests".into())?;
    check(&mut admitted)?;
    Ok("1000 sequential and 1000 concurrent requests within 30 per 60 s".into())
}

fn determinism(root: &Path) -> Check {
    let first = common::run_cli(root, &["all", "--offline"]);
    ensure(first.status.code() == Some(0), || {
        format!(
            "first run exit {:?}: {}",
            first.status.code(),
            String::from_utf8_lossy(&first.stderr)
        )
    })?;
    let snap = common::snapshot(&root.join("out"));
    std::fs::remove_dir_all(root.join("cache")).map_err(|e| e.to_string())?;
    let second = common::run_cli(root, &["all", "--offline"]);
    ensure(second.status.code() == Some(0), || {
        format!("second run exit {:?}", second.status.code())
    })?;
    let again = common::snapshot(&root.join("out"));
    let changed = common::diff(&snap, &again);
    ensure(changed.is_empty(), || format!("files differ: {changed:?}"))?;
    ensure(snap.len() >= 28, || format!("only {} files in out/", snap.len()))?;
    Ok(format!("{} files byte-identical across two runs", snap.len()))
}

fn degradation(root: &Path) -> Check {
    let data = DataLayout::new(root.join("data"));
    let out = OutLayout::new(root.join("out"));
    let exclusions = Table::read(&data.exclusions()).map_err(|e| e.to_string())?;
    ensure(exclusions.rows.len() == 1, || {
        format!("{} exclusions", exclusions.rows.len())
    })?;
    let reason = &exclusions.rows[0][1];
    ensure(reason.contains("restricted"), || format!("reason {reason:?}"))?;
    let manifest = Table::read(&out.manifest()).map_err(|e| e.to_string())?;
    let listed: Vec<&str> = manifest.rows.iter().map(|r| r[0].as_str()).collect();
    for stem in [
        "event_curves",
        "launch_effects",
        "group_comparisons",
        "model_performance",
        "dataset_stats",
    ] {
        let p = format!("tables/{stem}.csv");
        ensure(listed.contains(&p.as_str()), || format!("{p} missing"))?;
    }
    let regressions = listed.iter().filter(|p| p.starts_with("tables/regression_")).count();
    ensure(regressions == 9, || format!("{regressions} regression tables"))?;
    let summary = std::fs::read_to_string(out.summary_report()).map_err(|e| e.to_string())?;
    let line = format!("Excluded series: {} ({reason})", exclusions.rows[0][0]);
    ensure(summary.contains(&line), || "exclusion line missing from summary".into())?;
    Ok(format!(
        "{} excluded ({reason}); all tables emitted",
        exclusions.rows[0][0]
    ))
}

fn monotone_deltas() -> Check {
    let mut runner = TestRunner::new(Config {
        cases: 512,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = proptest::collection::vec(0u32..60, WINDOW_HOURS);
    runner
        .run(&strategy, |hourly| {
            let series = AlignedSeries {
                slug: "o/r".parse().unwrap(),
                t0: chrono::Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
                daily: hourly.chunks(24).map(|c| c.iter().sum()).collect(),
                hourly,
                baseline_stars: 0,
            };
            let (a, b, c) = (
                series.delta(Horizon::H24),
                series.delta(Horizon::H48),
                series.delta(Horizon::D7),
            );
            proptest::prop_assert!(a <= b && b <= c, "{a} {b} {c}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("512 random series".into())
}

#[test]
fn acceptance() {
    let fixture = tempfile::tempdir().unwrap();
    let root = fixture.path();
    let outcomes = vec![
        criterion("statistical oracle equivalence", Duration::from_secs(10), ols_oracle),
        criterion("elastic net limits", Duration::from_secs(30), enet_limits),
        criterion("gbt monotonicity", Duration::from_secs(30), gbt_monotone),
        criterion("synthetic closed loop", Duration::from_secs(60), synth_closed_loop),
        criterion("end-to-end determinism", Duration::from_secs(300), || determinism(root)),
        criterion("split contract", Duration::from_secs(1), || {
            split_contract(&root.join("out"), &root.join("data"))
        }),
        criterion("hour-bin mapping", Duration::from_secs(1), hour_bins),
        criterion("rate limiter", Duration::from_secs(5), rate_limiter),
        criterion("degradation", Duration::from_secs(5), || degradation(root)),
        criterion("monotone deltas", Duration::from_secs(30), monotone_deltas),
    ];
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{}: {}", o.name, o.detail))
        .collect();
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
