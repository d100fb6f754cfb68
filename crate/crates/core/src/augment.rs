//! Attribute augmentation: push each original's latent code along a semantic
//! direction by a random amount, decode, and keep the parent's label.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, Backends};
use crate::directions::SemanticDirection;
use crate::imageio::{ImageIoError, ImageStore};
use crate::model::numfmt::sig9;
use crate::model::{DatasetSample, LatentCode, Manifest, ManifestError, SampleSource};
use crate::rng::{stream, SeedStream};

/// Codes per generator call.
pub const DECODE_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid edit spec: {0}")]
    Spec(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("non-finite edit strength {0}")]
    NonFiniteAlpha(f64),
    #[error("all {attempted} edits failed; first failure: {first_reason}")]
    NoSuccesses {
        attempted: usize,
        first_reason: String,
    },
    #[error(transparent)]
    Backend(#[from] AdapterError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditSpec {
    pub direction: String,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub edits_per_sample: usize,
    pub seed: u64,
    /// Draw the sign of each edit at random as well.
    pub allow_negative: bool,
}

impl Default for EditSpec {
    fn default() -> Self {
        Self {
            direction: "beard".into(),
            alpha_min: 1.0,
            alpha_max: 3.0,
            edits_per_sample: 1,
            seed: 0,
            allow_negative: false,
        }
    }
}

impl EditSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.alpha_min.is_finite() && self.alpha_max.is_finite()) {
            return Err(AugmentError::Spec("alpha bounds must be finite".into()));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max) {
            return Err(AugmentError::Spec(format!(
                "need 0 < alpha_min <= alpha_max, got [{}, {}]",
                self.alpha_min, self.alpha_max
            )));
        }
        if self.edits_per_sample == 0 {
            return Err(AugmentError::Spec("edits_per_sample must be at least 1".into()));
        }
        Ok(())
    }
}

/// `w + alpha·normal`.
pub fn edit_latent(
    w: &LatentCode,
    dir: &SemanticDirection,
    alpha: f64,
) -> Result<LatentCode, AugmentError> {
    if !alpha.is_finite() {
        return Err(AugmentError::NonFiniteAlpha(alpha));
    }
    if w.dim() != dir.dim() {
        return Err(AugmentError::Dimension {
            expected: dir.dim(),
            actual: w.dim(),
        });
    }
    let v = w
        .as_slice()
        .iter()
        .zip(dir.normal())
        .map(|(a, n)| a + alpha * n)
        .collect();
    LatentCode::new(v).map_err(|_| AugmentError::NonFiniteAlpha(alpha))
}

/// Uniform on `[alpha_min, alpha_max]`, negated with probability one half
/// when `allow_negative` is set.
pub fn sample_alpha(spec: &EditSpec, rng: &mut SeedStream) -> f64 {
    let a = if spec.alpha_min == spec.alpha_max {
        spec.alpha_min
    } else {
        rng.random_range(spec.alpha_min..=spec.alpha_max)
    };
    if spec.allow_negative && rng.random::<bool>() {
        -a
    } else {
        a
    }
}

/// Augmented manifest plus the edits that were dropped.
#[derive(Debug)]
pub struct AugmentOutcome {
    pub manifest: Manifest,
    /// `(would-be sample id, reason)` for every skipped edit.
    pub skipped: Vec<(String, String)>,
}

pub fn augmented_id(parent: &str, direction: &str, k: usize) -> String {
    format!("{parent}+{direction}{k}")
}

struct Planned<'a> {
    parent: &'a DatasetSample,
    id: String,
    alpha: f64,
    code: LatentCode,
}

/// Appends `edits_per_sample` edited copies of every original in
/// `manifest`. Originals are copied unchanged; augmented samples follow them
/// in parent order. Codes missing from the manifest are obtained from the
/// encoder.
pub fn augment_dataset(
    manifest: &Manifest,
    dir: &SemanticDirection,
    spec: &EditSpec,
    backends: &Backends,
    images: &ImageStore,
) -> Result<AugmentOutcome, AugmentError> {
    spec.validate()?;
    if backends.generator.latent_dim() != dir.dim() {
        return Err(AugmentError::Dimension {
            expected: dir.dim(),
            actual: backends.generator.latent_dim(),
        });
    }
    let originals: Vec<&DatasetSample> = manifest.originals().collect();
    let mut out = manifest.empty_like();
    for s in &originals {
        out.push((*s).clone())?;
    }
    if originals.is_empty() {
        return Ok(AugmentOutcome {
            manifest: out,
            skipped: Vec::new(),
        });
    }

    let codes = latents_for(&originals, backends, images)?;
    let mut plan = Vec::with_capacity(originals.len() * spec.edits_per_sample);
    for (parent, w) in originals.iter().zip(&codes) {
        let mut rng = stream(spec.seed, &format!("augment/{}", parent.id), 0);
        for k in 0..spec.edits_per_sample {
            let alpha = sample_alpha(spec, &mut rng);
            plan.push(Planned {
                parent,
                id: augmented_id(&parent.id, dir.name(), k),
                alpha,
                code: edit_latent(w, dir, alpha)?,
            });
        }
    }

    let mut skipped = Vec::new();
    let mut produced = Vec::with_capacity(plan.len());
    for chunk in plan.chunks(DECODE_CHUNK) {
        let codes: Vec<LatentCode> = chunk.iter().map(|p| p.code.clone()).collect();
        match backends.generator.decode(&codes) {
            Ok(imgs) => produced.extend(chunk.iter().zip(imgs).map(|(p, i)| (p, Ok(i)))),
            Err(batch_err) => {
                log::warn!("decode batch failed ({batch_err}); retrying one by one");
                for p in chunk {
                    let r = backends
                        .generator
                        .decode(std::slice::from_ref(&p.code))
                        .map(|mut v| v.remove(0));
                    produced.push((p, r));
                }
            }
        }
    }

    let stored = crate::par::map(&produced, |(p, r)| match r {
        Ok(img) => images.store(&p.id, img).map_err(|e| e.to_string()),
        Err(e) => Err(e.to_string()),
    });
    for ((p, _), r) in produced.iter().zip(stored) {
        match r {
            Ok(image) => {
                let mut attributes = p.parent.attributes.clone();
                attributes.insert(dir.name().to_owned(), if p.alpha > 0.0 { 1 } else { -1 });
                out.push(DatasetSample {
                    id: p.id.clone(),
                    image,
                    latent: Some(p.code.clone()),
                    label: p.parent.label.clone(),
                    attributes,
                    source: SampleSource::Augmented,
                    parent_id: Some(p.parent.id.clone()),
                    edit_alpha: Some(p.alpha),
                    edit_direction: Some(dir.name().to_owned()),
                    quality_error: None,
                    category: p.parent.category.clone(),
                })?;
            }
            Err(reason) => {
                log::warn!("skipping {}: {reason}", p.id);
                skipped.push((p.id.clone(), reason));
            }
        }
    }
    if skipped.len() == plan.len() {
        return Err(AugmentError::NoSuccesses {
            attempted: plan.len(),
            first_reason: skipped[0].1.clone(),
        });
    }
    Ok(AugmentOutcome {
        manifest: out,
        skipped,
    })
}

/// Stored codes where present, encoder output otherwise.
fn latents_for(
    samples: &[&DatasetSample],
    backends: &Backends,
    images: &ImageStore,
) -> Result<Vec<LatentCode>, AugmentError> {
    let missing: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].latent.is_none())
        .collect();
    let mut codes: Vec<Option<LatentCode>> = samples.iter().map(|s| s.latent.clone()).collect();
    for chunk in missing.chunks(DECODE_CHUNK) {
        let imgs = crate::par::map(chunk, |&i| images.load(&samples[i].image))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let enc = backends.encoder.encode(&imgs)?;
        for (&i, w) in chunk.iter().zip(enc) {
            // same precision as a code read back from a manifest
            codes[i] = Some(w.map_values(sig9));
        }
    }
    Ok(codes.into_iter().map(|c| c.expect("filled")).collect())
}
