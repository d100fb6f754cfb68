mod common;

use std::sync::Arc;

use latentaug::adapters::{AdapterError, Backends, Generator, SyntheticBackend};
use latentaug::augment::{augment_dataset, edit_latent, sample_alpha, AugmentError, EditSpec};
use latentaug::directions::{DirectionMeta, SemanticDirection};
use latentaug::imageio::ImageStore;
use latentaug::model::{ImageGrid, ImageRef, LatentCode, Manifest};
use latentaug::rng::stream;
use latentaug::world::{beard_mask, decode_latent};
use proptest::prelude::*;

fn meta() -> DirectionMeta {
    DirectionMeta {
        sample_count: 0,
        seed: 0,
        solver_iterations: 0,
    }
}

#[test]
fn alpha_mean_matches_uniform() {
    let spec = EditSpec::default();
    let mut rng = stream(3, "alpha", 0);
    let draws: Vec<f64> = (0..10_000).map(|_| sample_alpha(&spec, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((1.96..=2.04).contains(&mean), "{mean}");
    assert!(draws.iter().all(|a| (1.0..=3.0).contains(a)));
}

#[test]
fn alpha_sequence_is_deterministic() {
    let spec = EditSpec::default();
    let a: Vec<f64> = {
        let mut r = stream(5, "alpha", 1);
        (0..20).map(|_| sample_alpha(&spec, &mut r)).collect()
    };
    let mut r = stream(5, "alpha", 1);
    let b: Vec<f64> = (0..20).map(|_| sample_alpha(&spec, &mut r)).collect();
    assert_eq!(a, b);
}

#[test]
fn negative_edits_only_when_allowed() {
    let spec = EditSpec {
        allow_negative: true,
        ..EditSpec::default()
    };
    let mut r = stream(5, "alpha", 2);
    let draws: Vec<f64> = (0..200).map(|_| sample_alpha(&spec, &mut r)).collect();
    assert!(draws.iter().any(|&a| a < 0.0) && draws.iter().any(|&a| a > 0.0));
    assert!(draws.iter().all(|a| (1.0..=3.0).contains(&a.abs())));
}

proptest! {
    #[test]
    fn edits_compose_additively(
        w in prop::collection::vec(-5.0f64..5.0, 6),
        n in prop::collection::vec(-1.0f64..1.0, 6),
        a in -4.0f64..4.0,
        b in -4.0f64..4.0,
    ) {
        prop_assume!(n.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        let dir = SemanticDirection::new("d", n, 0.0, 1.0, meta()).unwrap();
        let w = LatentCode::new(w).unwrap();
        let twice = edit_latent(&edit_latent(&w, &dir, a).unwrap(), &dir, b).unwrap();
        let once = edit_latent(&w, &dir, a + b).unwrap();
        for (x, y) in twice.as_slice().iter().zip(once.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let back = edit_latent(&edit_latent(&w, &dir, a).unwrap(), &dir, -a).unwrap();
        for (x, y) in back.as_slice().iter().zip(w.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn empty_manifest_gives_empty_augmented_set() {
    let cfg = common::world(0.01, 0.05);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let dir = SemanticDirection::new("beard", cfg.attribute_axis(0), 0.0, 1.0, meta()).unwrap();
    let out = augment_dataset(
        &Manifest::new("h", 0),
        &dir,
        &EditSpec::default(),
        &common::backends(&backend),
        &ImageStore::inline(),
    )
    .unwrap();
    assert!(out.manifest.is_empty());
}

#[test]
fn counts_labels_and_originals_untouched() {
    let cfg = common::world(0.01, 0.05);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let m = common::manifest(&backend, &common::latents(&cfg, 1, 6), "o");
    let before = m.to_bytes().unwrap();
    let dir = SemanticDirection::new("beard", cfg.attribute_axis(0), 0.0, 1.0, meta()).unwrap();
    let spec = EditSpec {
        edits_per_sample: 2,
        ..EditSpec::default()
    };
    let out = augment_dataset(&m, &dir, &spec, &common::backends(&backend), &ImageStore::inline())
        .unwrap();
    assert_eq!(m.to_bytes().unwrap(), before);
    let got = out.manifest;
    assert_eq!(got.originals().count(), 6);
    assert_eq!(got.augmented().count(), 12);
    for (a, b) in got.originals().zip(m.samples()) {
        assert_eq!(a, b);
    }
    for s in got.augmented() {
        let parent = got.get(s.parent_id.as_deref().unwrap()).unwrap();
        assert_eq!(s.label, parent.label);
        assert_eq!(s.edit_direction.as_deref(), Some("beard"));
        assert!((1.0..=3.0).contains(&s.edit_alpha.unwrap()));
        assert_eq!(s.attributes["beard"], 1);
    }
    got.validate().unwrap();
}

#[test]
fn fitted_beard_edits_darken_the_beard_region() {
    let cfg = common::world(0.0, 0.0);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let dir = common::fitted_direction(&backend, 0, 600);
    let zs = common::latents(&cfg, 2, 40);
    let m = common::manifest(&backend, &zs, "o");
    let out = augment_dataset(
        &m,
        &dir,
        &EditSpec::default(),
        &common::backends(&backend),
        &ImageStore::inline(),
    )
    .unwrap();
    let inline = |r: &ImageRef| match r {
        ImageRef::Inline(i) => i.clone(),
        ImageRef::Path(_) => unreachable!(),
    };
    for (s, z) in out.manifest.augmented().zip(&zs) {
        let parent = out.manifest.get(s.parent_id.as_deref().unwrap()).unwrap();
        let mask = beard_mask(z, &cfg);
        let before = inline(&parent.image).masked_mean(&mask).unwrap();
        let after = inline(&s.image).masked_mean(&mask).unwrap();
        assert!(after < before, "{}: {after} !< {before}", s.id);
    }
}

#[test]
fn exact_direction_raises_attribute_monotonically() {
    let cfg = common::world(0.0, 0.0);
    let dir = SemanticDirection::new("beard", cfg.attribute_axis(0), 0.0, 1.0, meta()).unwrap();
    let backend = SyntheticBackend::new(cfg.clone());
    let m = common::manifest(&backend, &common::latents(&cfg, 4, 5), "o");
    for s in m.samples() {
        let w = s.latent.as_ref().unwrap();
        let mut last = f64::NEG_INFINITY;
        for k in 0..=12 {
            let e = edit_latent(w, &dir, 0.25 * k as f64).unwrap();
            let attr = decode_latent(&e, &cfg).unwrap().attr[0];
            assert!(attr > last);
            last = attr;
        }
    }
}

/// Fails on every code whose first entry is positive.
struct Picky(Arc<SyntheticBackend>);

impl Generator for Picky {
    fn latent_dim(&self) -> usize {
        self.0.latent_dim()
    }

    fn decode(&self, codes: &[LatentCode]) -> Result<Vec<ImageGrid>, AdapterError> {
        if let Some(i) = codes.iter().position(|c| c.as_slice()[0] > 0.0) {
            return Err(AdapterError::Backend(format!("refusing code {i}")));
        }
        self.0.decode(codes)
    }
}

#[test]
fn backend_failures_skip_samples() {
    let cfg = common::world(0.01, 0.05);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let m = common::manifest(&backend, &common::latents(&cfg, 6, 30), "o");
    let dir = SemanticDirection::new("beard", cfg.attribute_axis(0), 0.0, 1.0, meta()).unwrap();
    let backends = Backends {
        generator: Arc::new(Picky(backend.clone())),
        ..common::backends(&backend)
    };
    let out = augment_dataset(&m, &dir, &EditSpec::default(), &backends, &ImageStore::inline())
        .unwrap();
    let kept = out.manifest.augmented().count();
    assert!(kept > 0 && !out.skipped.is_empty());
    assert_eq!(kept + out.skipped.len(), 30);
    for s in out.manifest.augmented() {
        assert!(s.latent.as_ref().unwrap().as_slice()[0] <= 0.0);
    }
}

struct Broken;

impl Generator for Broken {
    fn latent_dim(&self) -> usize {
        16
    }

    fn decode(&self, _: &[LatentCode]) -> Result<Vec<ImageGrid>, AdapterError> {
        Err(AdapterError::Backend("down".into()))
    }
}

#[test]
fn zero_successes_is_an_error() {
    let cfg = common::world(0.01, 0.05);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let m = common::manifest(&backend, &common::latents(&cfg, 7, 3), "o");
    let dir = SemanticDirection::new("beard", cfg.attribute_axis(0), 0.0, 1.0, meta()).unwrap();
    let backends = Backends {
        generator: Arc::new(Broken),
        ..common::backends(&backend)
    };
    let err = augment_dataset(&m, &dir, &EditSpec::default(), &backends, &ImageStore::inline())
        .unwrap_err();
    assert!(matches!(err, AugmentError::NoSuccesses { attempted: 3, .. }), "{err}");
}

#[test]
fn missing_codes_come_from_the_encoder() {
    let cfg = common::world(0.01, 0.05);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let full = common::manifest(&backend, &common::latents(&cfg, 8, 4), "o");
    let mut stripped = full.empty_like();
    for s in full.samples() {
        let mut s = s.clone();
        s.latent = None;
        stripped.push(s).unwrap();
    }
    let dir = SemanticDirection::new("beard", cfg.attribute_axis(0), 0.0, 1.0, meta()).unwrap();
    let spec = EditSpec::default();
    let a = augment_dataset(&full, &dir, &spec, &common::backends(&backend), &ImageStore::inline())
        .unwrap();
    let b = augment_dataset(
        &stripped,
        &dir,
        &spec,
        &common::backends(&backend),
        &ImageStore::inline(),
    )
    .unwrap();
    let aug = |m: &Manifest| m.augmented().cloned().collect::<Vec<_>>();
    assert_eq!(aug(&a.manifest), aug(&b.manifest));
    assert!(b.manifest.originals().all(|s| s.latent.is_none()));
}

#[test]
fn dimension_mismatch_is_rejected() {
    let cfg = common::world(0.01, 0.05);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let dir = SemanticDirection::new("beard", vec![1.0, 0.0], 0.0, 1.0, meta()).unwrap();
    let err = augment_dataset(
        &Manifest::new("h", 0),
        &dir,
        &EditSpec::default(),
        &common::backends(&backend),
        &ImageStore::inline(),
    )
    .unwrap_err();
    assert!(matches!(err, AugmentError::Dimension { .. }));
}

#[test]
fn images_written_to_store() {
    let cfg = common::world(0.01, 0.05);
    let backend = Arc::new(SyntheticBackend::new(cfg.clone()));
    let m = common::manifest(&backend, &common::latents(&cfg, 9, 3), "o");
    let dir = SemanticDirection::new("beard", cfg.attribute_axis(0), 0.0, 1.0, meta()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let store = ImageStore::at(tmp.path(), "beard/images");
    let out =
        augment_dataset(&m, &dir, &EditSpec::default(), &common::backends(&backend), &store)
            .unwrap();
    for s in out.manifest.augmented() {
        let ImageRef::Path(p) = &s.image else {
            panic!("expected a path")
        };
        assert!(p.starts_with("beard/images/"));
        let img = store.load(&s.image).unwrap();
        assert_eq!(img.height(), 64);
    }
}
