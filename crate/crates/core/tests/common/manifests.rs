use std::collections::BTreeMap;

use latentaug::model::{
    BlendshapeVector, DatasetSample, ImageGrid, ImageRef, LatentCode, Manifest, SampleSource,
};
use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

fn real() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        -1.0f64..1.0,
        (-1e-12f64..1e-12),
        Just(0.0),
        Just(-0.0),
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

fn image() -> impl Strategy<Value = ImageRef> {
    prop_oneof![
        4 => "[a-z]{1,6}/[a-z0-9_+]{1,10}\\.png".prop_map(ImageRef::Path),
        1 => vec(0.0f32..=1.0, 16 * 16 * 3)
            .prop_map(|px| ImageRef::Inline(ImageGrid::new(16, 16, px).unwrap())),
    ]
}

#[derive(Debug, Clone)]
struct Draft {
    image: ImageRef,
    latent: Option<Vec<f64>>,
    label: Vec<f64>,
    attributes: BTreeMap<String, i8>,
    category: String,
    quality_error: Option<f64>,
}

fn draft(b: usize) -> impl Strategy<Value = Draft> {
    (
        image(),
        proptest::option::of(vec(real(), 1..20)),
        vec(0.0f64..=1.0, b),
        btree_map("[a-z]{1,8}", prop_oneof![Just(1i8), Just(-1i8)], 0..3),
        "\\PC{0,12}",
        proptest::option::of(0.0f64..10.0),
    )
        .prop_map(|(image, latent, label, attributes, category, quality_error)| Draft {
            image,
            latent,
            label,
            attributes,
            category,
            quality_error,
        })
}

/// (parent index, alpha, direction) for each augmented sample.
type Edit = (prop::sample::Index, f64, String);

pub fn manifest() -> impl Strategy<Value = Manifest> {
    (1usize..9, "[0-9a-f]{0,64}", any::<u64>())
        .prop_flat_map(|(b, hash, seed)| {
            (
                vec(draft(b), 0..10),
                vec((any::<prop::sample::Index>(), real(), "[a-z]{1,8}"), 0..10),
                vec(draft(b), 10),
                Just(hash),
                Just(seed),
            )
        })
        .prop_map(|(originals, edits, extras, hash, seed)| build(originals, edits, extras, hash, seed))
}

fn build(
    originals: Vec<Draft>,
    edits: Vec<Edit>,
    extras: Vec<Draft>,
    hash: String,
    seed: u64,
) -> Manifest {
    let mut m = Manifest::new(hash, seed);
    let mut parents = Vec::new();
    for (i, d) in originals.into_iter().enumerate() {
        let id = format!("o{i}/{}", d.category.len());
        let mut s = DatasetSample::original(
            id.clone(),
            d.image,
            BlendshapeVector::new(d.label).unwrap(),
            d.category,
        );
        s.latent = d.latent.map(|v| LatentCode::new(v).unwrap());
        s.attributes = d.attributes;
        m.push(s.clone()).unwrap();
        parents.push(m.get(&id).unwrap().clone());
    }
    if parents.is_empty() {
        return m;
    }
    for (k, ((idx, alpha, dir), d)) in edits.into_iter().zip(extras).enumerate() {
        let p = idx.get(&parents);
        m.push(DatasetSample {
            id: format!("{}+{dir}{k}", p.id),
            image: d.image,
            latent: d.latent.map(|v| LatentCode::new(v).unwrap()),
            label: p.label.clone(),
            attributes: d.attributes,
            source: SampleSource::Augmented,
            parent_id: Some(p.id.clone()),
            edit_alpha: Some(alpha),
            edit_direction: Some(dir),
            quality_error: d.quality_error,
            category: p.category.clone(),
        })
        .unwrap();
    }
    m
}
