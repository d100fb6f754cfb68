use std::collections::BTreeSet;
use std::path::Path;

use latentaug::model::{read_manifest, SampleSource};
use latentaug::pipeline::{
    read_run_summary, BackendChoice, Overrides, Pipeline, PipelineConfig, PipelineError, Source,
    EXIT_BACKEND, EXIT_CONFIG,
};
use latentaug::quality::read_quality_report;
use latentaug::regression::TrainingLog;
use sha2::{Digest, Sha256};

const SMALL: &str = r#"
[dataset]
n_train = 48
n_test = 24
pool_size = 60

[regressor]
epochs = 2
"#;

fn pipeline(dir: &Path, toml: &str, o: Overrides) -> Pipeline {
    let cfg = PipelineConfig::from_toml(toml)
        .unwrap()
        .resolve(&Overrides {
            output_dir: Some(dir.to_path_buf()),
            ..o
        })
        .unwrap();
    Pipeline::new(cfg, BackendChoice::Synthetic).unwrap()
}

fn through_augment(p: &Pipeline) {
    p.gen_world().unwrap();
    p.fit_directions().unwrap();
    p.augment().unwrap();
}

#[test]
fn zero_tau_mix_holds_only_originals_and_exact_edits() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(
        dir.path(),
        SMALL,
        Overrides {
            tau: Some(0.0),
            ..Default::default()
        },
    );
    through_augment(&p);
    p.filter().unwrap();
    p.mix().unwrap();

    let l = p.layout();
    let train = read_manifest(&l.split("train")).unwrap();
    let mixed = read_manifest(&l.mixed()).unwrap();
    let report = read_quality_report(&l.quality_report()).unwrap();
    let exact: BTreeSet<&str> = report
        .iter()
        .filter(|r| r.error == 0.0)
        .map(|r| r.sample_id.as_str())
        .collect();

    let originals: Vec<&str> = mixed.originals().map(|s| s.id.as_str()).collect();
    let expected: Vec<&str> = train.samples().iter().map(|s| s.id.as_str()).collect();
    assert_eq!(originals, expected);
    let edits: BTreeSet<&str> = mixed.augmented().map(|s| s.id.as_str()).collect();
    assert_eq!(edits, exact);
    for s in mixed.augmented() {
        assert_eq!(s.source, SampleSource::Augmented);
        assert_eq!(s.quality_error, Some(0.0));
    }
    assert_eq!(report.len(), read_manifest(&l.augmented()).unwrap().augmented().count());
}

#[test]
fn run_summary_lists_every_file_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), SMALL, Overrides::default());
    p.bench().unwrap();
    p.write_summary("bench").unwrap();

    let summary = read_run_summary(&p.layout().summary()).unwrap();
    assert_eq!(summary.command, "bench");
    assert_eq!(summary.seed, p.config().seed);
    assert_eq!(summary.backend, "synthetic");

    let mut on_disk = Vec::new();
    for entry in walkdir(dir.path()) {
        let rel = entry
            .strip_prefix(dir.path())
            .unwrap()
            .to_string_lossy()
            .replace('\\', "/");
        if rel != "run_summary.json" {
            on_disk.push(rel);
        }
    }
    on_disk.sort();
    let listed: Vec<&str> = summary.files.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(listed, on_disk);
    for f in &summary.files {
        let bytes = std::fs::read(dir.path().join(&f.path)).unwrap();
        assert_eq!(f.bytes, bytes.len() as u64);
        assert_eq!(f.sha256, hex::encode(Sha256::digest(&bytes)), "{}", f.path);
    }
    for rel in [
        "world/train.jsonl",
        "directions/beard.json",
        "augment/augmented.jsonl",
        "filter/filtered.jsonl",
        "filter/quality.jsonl",
        "mix/train.jsonl",
        "models/baseline.ckpt",
        "models/augmented.ckpt",
        "models/filtered.ckpt",
        "eval/report.json",
        "report/table.txt",
    ] {
        assert!(summary.file(rel).is_some(), "{rel} not listed");
    }
}

fn walkdir(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out
}

#[test]
fn failed_stage_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), SMALL, Overrides::default());
    through_augment(&p);
    let aug_dir = p.layout().augment_dir();
    std::fs::write(aug_dir.join("leftover.txt"), "x").unwrap();

    let exchange = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::from_toml(&format!("{SMALL}\n[backend]\ntimeout_secs = 0.2\n"))
        .unwrap()
        .resolve(&Overrides {
            output_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        })
        .unwrap();
    let broken =
        Pipeline::new(cfg, BackendChoice::Exchange(exchange.path().to_path_buf())).unwrap();
    let err = broken.augment().unwrap_err();
    assert_eq!(err.exit_code(), EXIT_BACKEND, "{err}");
    assert!(!aug_dir.exists());
    assert!(p.layout().split("train").exists());
    assert!(p.layout().direction("beard").exists());
}

#[test]
fn missing_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), SMALL, Overrides::default());
    for r in [p.fit_directions(), p.augment(), p.filter(), p.mix(), p.train(Source::Baseline)] {
        let e = r.unwrap_err();
        assert!(matches!(e, PipelineError::MissingArtifact(_)), "{e}");
        assert_eq!(e.exit_code(), EXIT_CONFIG);
    }
    let e = p.eval().unwrap_err();
    assert!(matches!(e, PipelineError::MissingArtifact(_)), "{e}");
    let e = p.report().unwrap_err();
    assert!(matches!(e, PipelineError::MissingArtifact(_)), "{e}");
}

#[test]
fn artifacts_from_another_world_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), SMALL, Overrides::default())
        .gen_world()
        .unwrap();
    let other = pipeline(
        dir.path(),
        SMALL,
        Overrides {
            seed: Some(8),
            ..Default::default()
        },
    );
    let e = other.fit_directions().unwrap_err();
    assert!(matches!(e, PipelineError::StaleArtifact { .. }), "{e}");
    assert_eq!(e.exit_code(), EXIT_CONFIG);
    assert!(!other.layout().directions_dir().exists());
}

#[test]
fn invalid_config_is_rejected_before_any_work() {
    let bad = [
        "[dataset]\nattribute = \"hat\"\n",
        "[dataset]\nlabel_flip_rate = 0.5\n",
        "[filter]\ntau = -1.0\n",
        "unknown = 3\n",
    ];
    for text in bad {
        let r = PipelineConfig::from_toml(text).and_then(|c| c.resolve(&Overrides::default()));
        let e = r.unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG, "{text}: {e}");
    }
}

#[test]
fn training_loss_falls_on_a_full_sized_training_set() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(
        dir.path(),
        "[dataset]\nn_train = 2000\nn_test = 16\npool_size = 40\n\n[regressor]\nepochs = 3\n",
        Overrides::default(),
    );
    p.gen_world().unwrap();
    p.train(Source::Baseline).unwrap();
    let text = std::fs::read_to_string(p.layout().training_log(Source::Baseline)).unwrap();
    let log: TrainingLog = serde_json::from_str(&text).unwrap();
    assert_eq!(log.epoch_losses.len(), 3);
    assert!(log.epoch_losses.iter().all(|l| l.is_finite()));
    assert!(log.final_loss() < log.epoch_losses[0], "{:?}", log.epoch_losses);
}
