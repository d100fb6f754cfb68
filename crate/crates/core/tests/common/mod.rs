#![allow(dead_code)]

pub mod manifests;

use std::sync::Arc;

use latentaug::adapters::{Backends, Encoder, SyntheticBackend};
use latentaug::directions::{fit_direction, LabeledLatentSet, SemanticDirection, SolverConfig};
use latentaug::model::{DatasetSample, ImageRef, Manifest};
use latentaug::rng::stream;
use latentaug::world::{blendshape_label, sample_latent, FactoredLatent, WorldConfig, WorldParams};

pub fn world(sigma: f64, rho: f64) -> WorldConfig {
    WorldConfig::new(WorldParams {
        encoder_noise_sigma: sigma,
        entanglement_rho: rho,
        ..WorldParams::default()
    })
    .unwrap()
}

pub fn latents(cfg: &WorldConfig, seed: u64, n: usize) -> Vec<FactoredLatent> {
    (0..n as u64)
        .map(|i| sample_latent(&mut stream(seed, "common", i), cfg))
        .collect()
}

/// Originals with inline images and encoder codes, all registered with
/// `backend`.
pub fn manifest(backend: &SyntheticBackend, zs: &[FactoredLatent], prefix: &str) -> Manifest {
    let cfg = backend.config();
    let images = backend.render_faces(zs).unwrap();
    let codes = backend.encode(&images).unwrap();
    let mut m = Manifest::new(cfg.content_hash(), 0);
    for (i, ((z, img), w)) in zs.iter().zip(images).zip(codes).enumerate() {
        let mut s = DatasetSample::original(
            format!("{prefix}{i:04}"),
            ImageRef::Inline(img),
            blendshape_label(z),
            "all",
        );
        s.latent = Some(w);
        for (a, name) in cfg.attribute_names().iter().enumerate() {
            s.attributes
                .insert((*name).to_owned(), if z.attr[a] > 0.0 { 1 } else { -1 });
        }
        m.push(s).unwrap();
    }
    m
}

/// Beard direction fitted on a fresh labelled pool.
pub fn fitted_direction(backend: &SyntheticBackend, attr: usize, n: usize) -> SemanticDirection {
    let cfg = backend.config();
    let zs = latents(cfg, 99, n);
    let images = backend.render_faces(&zs).unwrap();
    let codes = backend.encode(&images).unwrap();
    let labels = zs
        .iter()
        .map(|z| if z.attr[attr] > 0.0 { 1 } else { -1 })
        .collect();
    let set = LabeledLatentSet::new(cfg.attribute_names()[attr], codes, labels).unwrap();
    fit_direction(&set, &SolverConfig::default()).unwrap()
}

pub fn backends(backend: &Arc<SyntheticBackend>) -> Backends {
    Backends::synthetic(backend.clone())
}
