//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../../core/tests/common/mod.rs"]
mod common;
mod oracles;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use latentaug::adapters::{synthetic_handler, LoopbackServer, SyntheticBackend};
use latentaug::augment::{augment_dataset, EditSpec};
use latentaug::directions::{fit_direction, LabeledLatentSet, SolverConfig};
use latentaug::imageio::ImageStore;
use latentaug::model::{read_manifest, write_manifest, LandmarkSet, LatentCode};
use latentaug::pipeline::{Overrides, PipelineConfig};
use latentaug::quality::{filter_augmented, landmark_error, EyeStations};
use latentaug::regression::net::{loss_and_grad, smooth_l1};
use latentaug::regression::{Architecture, EvalReport};
use latentaug::rng::stream;
use latentaug::world::{encode, sample_latent, LandmarkLayout, WorldConfig, WorldParams};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn direction_recovery() -> Outcome {
    let cfg = WorldConfig::new(WorldParams::default()).unwrap();
    let mut latents = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2000u64 {
        let mut s = stream(1, "acceptance/svm", i);
        let z = sample_latent(&mut s, &cfg);
        let mut y = if z.attr[0] > 0.0 { 1 } else { -1 };
        if s.random::<f64>() < 0.05 {
            y = -y;
        }
        latents.push(encode(&z, &cfg, &mut s).unwrap());
        labels.push(y);
    }
    let set = LabeledLatentSet::new("beard", latents, labels).unwrap();
    let t = Instant::now();
    let dir = fit_direction(&set, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let cos = dot(dir.normal(), &cfg.attribute_axis(0));
    check(
        cos >= 0.97 && secs < 30.0,
        format!("cosine {cos:.4}, fit {secs:.2}s"),
    )
}

fn max_margin() -> Outcome {
    let hard = SolverConfig {
        c: 1e6,
        tolerance: 1e-12,
        ..SolverConfig::default()
    };
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for case in 0..200u64 {
        let Some((pos, neg)) = oracles::separable_instance(case) else {
            continue;
        };
        let latents = pos
            .iter()
            .chain(&neg)
            .map(|x| LatentCode::new(x.clone()).unwrap())
            .collect();
        let labels = std::iter::repeat_n(1, pos.len())
            .chain(std::iter::repeat_n(-1, neg.len()))
            .collect();
        let data = LabeledLatentSet::new("m", latents, labels).unwrap();
        let dir = fit_direction(&data, &hard).map_err(|e| format!("case {case}: {e}"))?;
        let fitted = data
            .latents()
            .iter()
            .zip(data.labels())
            .map(|(w, &y)| y as f64 * dir.decision(w.as_slice()))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((fitted - oracles::hull_distance(&pos, &neg) / 2.0).abs());
        checked += 1;
    }
    check(
        worst <= 1e-4 && checked > 100,
        format!("{checked} instances, worst margin gap {worst:.2e}"),
    )
}

fn filter_exactness() -> Outcome {
    let cfg = common::world(0.01, 0.05);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let m = common::manifest(&backend, &common::latents(&cfg, 21, 200), "o");
    let augmented = augment_dataset(
        &m,
        &oracles::leaky_direction(&cfg),
        &EditSpec::default(),
        &common::backends(&backend),
        &ImageStore::inline(),
    )
    .map_err(|e| e.to_string())?
    .manifest;
    let eyes = EyeStations::from(&LandmarkLayout::for_count(cfg.landmark_count()));
    let kept = |tau: f64| -> Result<BTreeSet<String>, String> {
        let out = filter_augmented(&augmented, tau, backend.as_ref(), &ImageStore::inline(), eyes)
            .map_err(|e| e.to_string())?;
        Ok(out.filtered.augmented().map(|s| s.id.clone()).collect())
    };
    let at = [kept(0.02)?, kept(0.05)?, kept(0.1)?];
    let brute = oracles::brute_force_kept(&augmented, &backend, &cfg, eyes, 0.05);
    let exact = at[1] == brute;
    let monotone = at[0].is_subset(&at[1]) && at[1].is_subset(&at[2]);
    check(
        exact && monotone,
        format!(
            "kept {}/{}/{} of 200 at 0.02/0.05/0.1, brute force {}",
            at[0].len(),
            at[1].len(),
            at[2].len(),
            brute.len()
        ),
    )
}

fn quality_score() -> Outcome {
    let mut rng = stream(4, "acceptance/quality", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = oracles::random_landmarks(&mut rng, 240);
        let q = oracles::random_landmarks(&mut rng, 240);
        let n = rng.random_range(1.0..40.0);
        let got = landmark_error(&p, &q, n).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracles::direct_error(&p, &q, n)).abs());
    }
    let p = oracles::random_landmarks(&mut rng, 240);
    let q = LandmarkSet::new(p.points().iter().map(|[x, y]| [x + 3.0, y + 4.0]).collect())
        .unwrap();
    let offset = landmark_error(&p, &q, 1.0).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-12 && (offset - 5.0).abs() <= 1e-12,
        format!("worst deviation {worst:.1e}, offset case {offset}"),
    )
}

fn gradient_check() -> Outcome {
    const BETA: f64 = 1.0;
    let arch = Architecture::new(8, 8, &[3], &[4, 2]);
    let n = 3;
    let scale = 1.0 / (n * 2) as f64;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 0;
    while checked < 100 {
        seed += 1;
        if seed > 1000 {
            return Err(format!("only {checked} points away from the kink"));
        }
        let mut r = stream(seed, "acceptance/gradcheck", 0);
        let p: Vec<f64> = (0..arch.param_count).map(|_| r.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n * arch.input_len()).map(|_| r.random_range(-0.5..0.5)).collect();
        let y: Vec<f64> = (0..n * 2).map(|_| r.random_range(-1.5..1.5)).collect();
        let out = latentaug::regression::net::forward(&arch, &p, &x, n);
        if out.iter().zip(&y).any(|(o, t)| ((o - t).abs() - BETA).abs() < 1e-3) {
            continue;
        }
        let loss = |q: &[f64]| loss_and_grad(&arch, q, &x, &y, n, BETA, scale).0;
        let (_, g) = loss_and_grad(&arch, &p, &x, &y, n, BETA, scale);
        let h = 1e-6;
        let num: Vec<f64> = (0..p.len())
            .map(|i| {
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += h;
                b[i] -= h;
                (loss(&a) - loss(&b)) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = dot(&g, &g).sqrt() + dot(&num, &num).sqrt();
        worst = worst.max(diff / norm.max(1e-12));
        checked += 1;
    }
    check(
        worst <= 1e-4,
        format!("{checked} points, worst relative error {worst:.2e}"),
    )
}

fn smooth_l1_values() -> Outcome {
    let got = [smooth_l1(0.0, 1.0), smooth_l1(0.5, 1.0), smooth_l1(2.0, 1.0)];
    check(got == [0.0, 0.125, 1.5], format!("{got:?}"))
}

/// Runs `latentaug bench` for one seed and returns its output directory.
fn bench(root: &Path, seed: u64, tag: &str) -> Result<(PathBuf, Duration), String> {
    let out = root.join(format!("seed{seed}{tag}"));
    let t = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_latentaug"))
        .args(["--seed", &seed.to_string(), "--out"])
        .arg(&out)
        .arg("bench")
        .env("RUST_LOG", "warn")
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("bench --seed {seed} exited with {status}"));
    }
    Ok((out, t.elapsed()))
}

fn all_l1(dir: &Path, row: &str) -> Result<f64, String> {
    let text = std::fs::read_to_string(dir.join("eval/report.json")).map_err(|e| e.to_string())?;
    let report = EvalReport::from_json(&text).map_err(|e| e.to_string())?;
    report
        .cell(row, "All")
        .map(|c| c.mean)
        .ok_or_else(|| format!("no All cell for {row}"))
}

fn trend(runs: &[PathBuf], slowest: Duration) -> Outcome {
    let rows = ["Baseline", "W/ beard", "W/ beard (filtered)"];
    let mut mean = [0.0; 3];
    for dir in runs {
        for (m, row) in mean.iter_mut().zip(rows) {
            *m += all_l1(dir, row)? / runs.len() as f64;
        }
    }
    let [base, aug, filt] = mean;
    check(
        filt <= aug && aug <= base && filt <= 0.9 * base && slowest.as_secs() <= 15 * 60,
        format!(
            "mean All l1 over {} seeds: baseline {base:.4}, augmented {aug:.4}, filtered {filt:.4} (ratio {:.3}); slowest run {:.0}s",
            runs.len(),
            filt / base,
            slowest.as_secs_f64()
        ),
    )
}

/// Manifests, quality reports, evaluation and table under `dir`, relative.
fn comparable_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|x| x == "jsonl")
                || path.ends_with("report/table.txt")
                || path.ends_with("eval/report.json")
            {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn identical(a: &Path, b: &Path) -> Outcome {
    let files = comparable_files(a);
    if files != comparable_files(b) {
        return Err("different file sets".into());
    }
    for f in &files {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            return Err(format!("{} differs", f.display()));
        }
    }
    Ok(format!("{} files byte-identical", files.len()))
}

fn determinism(first: &Path, root: &Path) -> Outcome {
    let (second, _) = bench(root, 7, "-again")?;
    let d = identical(first, &second)?;
    check(
        comparable_files(first).iter().any(|f| f.ends_with("quality.jsonl")),
        format!("bench --seed 7 twice: {d}"),
    )
}

const SMALL: &str = "[dataset]\nn_train = 48\nn_test = 24\npool_size = 60\n\n[regressor]\nepochs = 2\n";

fn protocol_conformance(root: &Path) -> Outcome {
    let cfg_path = root.join("small.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let run = |out: &Path, backend: &str| -> Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_latentaug"))
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(out)
            .args(["--backend", backend, "bench"])
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if o.status.success() {
            Ok(())
        } else {
            Err(format!("{backend}: {}", String::from_utf8_lossy(&o.stderr)))
        }
    };
    let local = root.join("in-process");
    run(&local, "synthetic")?;

    let remote = root.join("loopback");
    let world = PipelineConfig::from_toml(SMALL)
        .and_then(|c| c.resolve(&Overrides::default()))
        .and_then(|c| c.world_config())
        .map_err(|e| e.to_string())?;
    let registry = remote.join("world/registry.jsonl");
    let server_backend =
        Arc::new(SyntheticBackend::with_store(world, registry).map_err(|e| e.to_string())?);
    let exchange = root.join("exchange");
    let _server = LoopbackServer::spawn(&exchange, synthetic_handler(server_backend))
        .map_err(|e| e.to_string())?;
    run(&remote, &format!("exchange:{}", exchange.display()))?;
    identical(&local, &remote).map(|d| format!("in-process vs loopback exchange: {d}"))
}

fn manifest_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let mut runner = TestRunner::new(Config {
        cases: 500,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&common::manifests::manifest(), |m| {
            write_manifest(&m, &path).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let back = read_manifest(&path).map_err(|e| TestCaseError::fail(e.to_string()))?;
            if back != m {
                return Err(TestCaseError::fail("read(write(m)) != m"));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("500 random manifests".into())
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
            .unwrap_or_else(|| "panicked".into()))
    })
}

fn report(n: usize, name: &str, o: &Outcome) -> bool {
    match o {
        Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
        Err(d) => println!("criterion {n:>2} FAIL  {name}: {d}"),
    }
    o.is_ok()
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "direction recovery", guarded(direction_recovery)),
        (2, "max-margin oracle", guarded(max_margin)),
        (3, "filter exactness", guarded(filter_exactness)),
        (4, "quality score", guarded(quality_score)),
        (5, "gradient check", guarded(gradient_check)),
        (6, "smooth-L1 values", guarded(smooth_l1_values)),
    ];

    let benches = guarded(|| {
        let mut dirs = Vec::new();
        let mut slowest = Duration::ZERO;
        for seed in [7, 8, 9] {
            let (dir, t) = bench(root.path(), seed, "")?;
            slowest = slowest.max(t);
            dirs.push(dir);
        }
        Ok((dirs, slowest))
    });
    let (trend_outcome, det_outcome) = match &benches {
        Ok((dirs, slowest)) => (
            guarded(|| trend(dirs, *slowest)),
            guarded(|| determinism(&dirs[0], root.path())),
        ),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    results.push((7, "trend reproduction", trend_outcome));
    results.push((8, "determinism", det_outcome));
    results.push((9, "protocol conformance", guarded(|| protocol_conformance(root.path()))));
    results.push((10, "manifest round trip", guarded(manifest_round_trip)));

    let mut failed = 0;
    for (n, name, o) in &results {
        if !report(*n, name, o) {
            failed += 1;
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
