//! Landmark-agreement quality filter for augmented samples.
//!
//! An edit should change the attribute and nothing else, so the landmarks of
//! an augmented image should sit where its parent's did. The score is the
//! landmark RMSE divided by the parent's interocular distance; samples
//! scoring at most `tau` are kept.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::Landmarker;
use crate::imageio::{contact_sheet, ImageIoError, ImageStore, Tile};
use crate::model::numfmt::sig9;
use crate::model::{DatasetSample, ImageGrid, LandmarkSet, Manifest, ManifestError};
use crate::world::LandmarkLayout;

pub const DEFAULT_TAU: f64 = 0.05;
const LANDMARK_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("landmark count mismatch: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("normalizer must be positive and finite, got {0}")]
    BadNormalizer(f64),
    #[error("threshold must be >= 0, got {0}")]
    BadThreshold(f64),
    #[error("eye station {index} outside a {count}-point landmark set")]
    BadStation { index: usize, count: usize },
    #[error("augmented sample {id} names parent {parent}, which is not in the manifest")]
    MissingParent { id: String, parent: String },
    #[error("augmented sample {0} has no parent id")]
    Orphan(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// `sqrt(mean_k ‖p_k − q_k‖²) / normalizer`.
pub fn landmark_error(
    p: &LandmarkSet,
    q: &LandmarkSet,
    normalizer: f64,
) -> Result<f64, QualityError> {
    if p.len() != q.len() {
        return Err(QualityError::CountMismatch(p.len(), q.len()));
    }
    if !(normalizer > 0.0 && normalizer.is_finite()) {
        return Err(QualityError::BadNormalizer(normalizer));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = p
        .points()
        .iter()
        .zip(q.points())
        .map(|(a, b)| {
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            dx * dx + dy * dy
        })
        .sum();
    Ok((sum / p.len() as f64).sqrt() / normalizer)
}

/// Landmark indices of the two eye centres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EyeStations {
    pub left: usize,
    pub right: usize,
}

impl From<&LandmarkLayout> for EyeStations {
    fn from(l: &LandmarkLayout) -> Self {
        Self {
            left: l.left_eye_center,
            right: l.right_eye_center,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub value: f64,
    /// The eye centres were under a pixel apart and the image diagonal was
    /// used instead.
    pub fallback: bool,
}

/// Distance between the eye centres, or the image diagonal if that is
/// under one pixel.
pub fn interocular_normalizer(
    p: &LandmarkSet,
    eyes: EyeStations,
    image_width: usize,
    image_height: usize,
) -> Result<Normalizer, QualityError> {
    for index in [eyes.left, eyes.right] {
        if index >= p.len() {
            return Err(QualityError::BadStation {
                index,
                count: p.len(),
            });
        }
    }
    let (a, b) = (p.points()[eyes.left], p.points()[eyes.right]);
    let d = (a[0] - b[0]).hypot(a[1] - b[1]);
    Ok(if d >= 1.0 {
        Normalizer {
            value: d,
            fallback: false,
        }
    } else {
        Normalizer {
            value: (image_width as f64).hypot(image_height as f64),
            fallback: true,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityResult {
    pub sample_id: String,
    /// Normalized RMSE; infinite when landmarks could not be detected.
    pub error: f64,
    pub accepted: bool,
    pub normalizer: f64,
    pub normalizer_fallback: bool,
    pub failure: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ReportLine {
    sample_id: String,
    error: Option<f64>,
    accepted: bool,
    normalizer: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    normalizer_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

#[derive(Debug)]
pub struct FilterOutcome {
    /// Originals plus accepted augmented samples.
    pub filtered: Manifest,
    /// The input with `quality_error` set on every scored augmented sample.
    pub scored: Manifest,
    /// One entry per augmented sample, in manifest order.
    pub results: Vec<QualityResult>,
}

fn detect(
    landmarker: &dyn Landmarker,
    images: &ImageStore,
    samples: &[&DatasetSample],
) -> Result<Vec<Result<LandmarkSet, String>>, QualityError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(LANDMARK_CHUNK) {
        let loaded = crate::par::map(chunk, |s| images.load(&s.image))
            .into_iter()
            .collect::<Result<Vec<ImageGrid>, _>>()?;
        match landmarker.landmarks(&loaded) {
            Ok(sets) => out.extend(sets.into_iter().map(|s| {
                match s {
                    Some(s) if s.len() == landmarker.landmark_count() => Ok(s),
                    Some(s) => Err(format!("detector returned {} points", s.len())),
                    None => Err("landmark detection failed".to_owned()),
                }
            })),
            Err(e) => {
                log::warn!("landmark batch failed: {e}");
                out.extend(chunk.iter().map(|_| Err(format!("landmark backend: {e}"))));
            }
        }
    }
    Ok(out)
}

/// Scores every augmented sample against its parent and keeps those with
/// error at most `tau`. Originals always pass through.
pub fn filter_augmented(
    manifest: &Manifest,
    tau: f64,
    landmarker: &dyn Landmarker,
    images: &ImageStore,
    eyes: EyeStations,
) -> Result<FilterOutcome, QualityError> {
    if !(tau >= 0.0) {
        return Err(QualityError::BadThreshold(tau));
    }
    let augmented: Vec<&DatasetSample> = manifest.augmented().collect();
    let mut parent_ids: Vec<&str> = Vec::new();
    let mut seen = HashMap::new();
    for s in &augmented {
        let pid = s
            .parent_id
            .as_deref()
            .ok_or_else(|| QualityError::Orphan(s.id.clone()))?;
        if manifest.get(pid).is_none() {
            return Err(QualityError::MissingParent {
                id: s.id.clone(),
                parent: pid.to_owned(),
            });
        }
        if !seen.contains_key(pid) {
            seen.insert(pid, parent_ids.len());
            parent_ids.push(pid);
        }
    }
    let parents: Vec<&DatasetSample> = parent_ids
        .iter()
        .map(|id| manifest.get(id).expect("checked"))
        .collect();
    let parent_marks = detect(landmarker, images, &parents)?;
    let child_marks = detect(landmarker, images, &augmented)?;

    let pairs: Vec<(usize, usize)> = augmented
        .iter()
        .enumerate()
        .map(|(i, s)| (i, seen[s.parent_id.as_deref().expect("checked")]))
        .collect();
    let results = crate::par::map(&pairs, |&(i, pi)| {
        let s = augmented[i];
        let parent = manifest.get(parent_ids[pi]).expect("checked");
        let failed = |reason: String, normalizer: f64, fallback: bool| QualityResult {
            sample_id: s.id.clone(),
            error: f64::INFINITY,
            accepted: false,
            normalizer,
            normalizer_fallback: fallback,
            failure: Some(reason),
        };
        let (p, q) = match (&parent_marks[pi], &child_marks[i]) {
            (Err(e), _) => return Ok(failed(format!("parent {}: {e}", parent.id), 0.0, false)),
            (Ok(p), Ok(q)) => (p, q),
            (Ok(p), Err(e)) => {
                let n = normalizer_for(p, eyes, images, parent)?;
                return Ok(failed(e.clone(), n.value, n.fallback));
            }
        };
        let n = normalizer_for(p, eyes, images, parent)?;
        let error = landmark_error(p, q, n.value)?;
        Ok(QualityResult {
            sample_id: s.id.clone(),
            error,
            accepted: error <= tau,
            normalizer: n.value,
            normalizer_fallback: n.fallback,
            failure: None,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, QualityError>>()?;

    let by_id: HashMap<&str, &QualityResult> =
        results.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    let mut filtered = manifest.empty_like();
    let mut scored = manifest.empty_like();
    for s in manifest.samples() {
        let mut s = s.clone();
        let keep = match by_id.get(s.id.as_str()) {
            None => !s.is_augmented(),
            Some(r) => {
                if r.error.is_finite() {
                    s.quality_error = Some(r.error);
                }
                r.accepted
            }
        };
        if keep {
            filtered.push(s.clone())?;
        }
        scored.push(s)?;
    }
    Ok(FilterOutcome {
        filtered,
        scored,
        results,
    })
}

fn normalizer_for(
    p: &LandmarkSet,
    eyes: EyeStations,
    images: &ImageStore,
    parent: &DatasetSample,
) -> Result<Normalizer, QualityError> {
    let img = images.load(&parent.image)?;
    interocular_normalizer(p, eyes, img.width(), img.height())
}

/// One JSON record per line, reals at 9 significant digits.
pub fn quality_report_bytes(results: &[QualityResult]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in results {
        let line = ReportLine {
            sample_id: r.sample_id.clone(),
            error: r.error.is_finite().then(|| sig9(r.error)),
            accepted: r.accepted,
            normalizer: sig9(r.normalizer),
            normalizer_fallback: r.normalizer_fallback,
            failure: r.failure.clone(),
        };
        serde_json::to_writer(&mut out, &line).expect("report line serializes");
        out.push(b'\n');
    }
    out
}

pub fn write_quality_report(results: &[QualityResult], path: &Path) -> Result<(), QualityError> {
    let io = |e: std::io::Error| QualityError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&quality_report_bytes(results)).map_err(io)
}

pub fn read_quality_report(path: &Path) -> Result<Vec<QualityResult>, QualityError> {
    let text = std::fs::read_to_string(path).map_err(|e| QualityError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let r: ReportLine = serde_json::from_str(l).map_err(|e| QualityError::Io {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })?;
            Ok(QualityResult {
                sample_id: r.sample_id,
                error: r.error.unwrap_or(f64::INFINITY),
                accepted: r.accepted,
                normalizer: r.normalizer,
                normalizer_fallback: r.normalizer_fallback,
                failure: r.failure,
            })
        })
        .collect()
}

pub const ACCEPT_BORDER: [u8; 3] = [40, 170, 60];
pub const REJECT_BORDER: [u8; 3] = [220, 30, 30];

/// Accept/reject panel: rows of (parent, edit) pairs, accepted examples
/// first with green outlines, then rejected ones with red outlines. Takes
/// the first `per_group` of each in manifest order.
pub fn quality_grid(
    outcome: &FilterOutcome,
    images: &ImageStore,
    per_group: usize,
) -> Result<Option<RgbImage>, QualityError> {
    const PAIRS_PER_ROW: usize = 3;
    let pick = |accepted: bool| -> Vec<&QualityResult> {
        outcome
            .results
            .iter()
            .filter(|r| r.accepted == accepted)
            .take(per_group)
            .collect()
    };
    let mut owned: Vec<(ImageGrid, ImageGrid, [u8; 3])> = Vec::new();
    for (group, border) in [(pick(true), ACCEPT_BORDER), (pick(false), REJECT_BORDER)] {
        for r in group {
            let child = outcome.scored.get(&r.sample_id).expect("result sample present");
            let parent = outcome
                .scored
                .get(child.parent_id.as_deref().expect("augmented"))
                .expect("parent present");
            owned.push((images.load(&parent.image)?, images.load(&child.image)?, border));
        }
    }
    let accepted_pairs = pick(true).len();
    let mut rows: Vec<Vec<Tile<'_>>> = Vec::new();
    for (start, end) in [(0, accepted_pairs), (accepted_pairs, owned.len())] {
        for chunk in owned[start..end].chunks(PAIRS_PER_ROW) {
            rows.push(
                chunk
                    .iter()
                    .flat_map(|(p, c, b)| {
                        [
                            Tile {
                                image: p,
                                border: None,
                            },
                            Tile {
                                image: c,
                                border: Some(*b),
                            },
                        ]
                    })
                    .collect(),
            );
        }
    }
    Ok(contact_sheet(&rows))
}
