use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::numfmt::sig9;
use super::types::{BlendshapeVector, ImageGrid, LatentCode};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Original,
    Augmented,
}

/// Where a sample's pixels live: a file relative to the dataset root, or
/// inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageRef {
    Path(String),
    Inline(#[serde(deserialize_with = "deserialize_checked_image")] ImageGrid),
}

fn deserialize_checked_image<'de, D>(de: D) -> Result<ImageGrid, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    struct Raw {
        height: usize,
        width: usize,
        pixels: Vec<f32>,
    }
    let raw = Raw::deserialize(de)?;
    ImageGrid::new(raw.height, raw.width, raw.pixels).map_err(serde::de::Error::custom)
}

impl ImageRef {
    /// Resolves a path reference against the dataset root.
    pub fn resolve(&self, root: &Path) -> Option<PathBuf> {
        match self {
            ImageRef::Path(p) => Some(root.join(p)),
            ImageRef::Inline(_) => None,
        }
    }
}

/// One labelled image plus its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub id: String,
    pub image: ImageRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentCode>,
    pub label: BlendshapeVector,
    #[serde(default)]
    pub attributes: BTreeMap<String, i8>,
    pub source: SampleSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_error: Option<f64>,
    pub category: String,
}

impl DatasetSample {
    pub fn original(
        id: impl Into<String>,
        image: ImageRef,
        label: BlendshapeVector,
        category: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            image,
            latent: None,
            label,
            attributes: BTreeMap::new(),
            source: SampleSource::Original,
            parent_id: None,
            edit_alpha: None,
            edit_direction: None,
            quality_error: None,
            category: category.into(),
        }
    }

    pub fn is_augmented(&self) -> bool {
        self.source == SampleSource::Augmented
    }

    /// Rounds every real-valued field to 9 significant digits, the precision
    /// manifests store. Idempotent.
    pub fn canonicalize(&mut self) {
        if let Some(l) = &self.latent {
            self.latent = Some(l.map_values(sig9));
        }
        self.label = self.label.map_values(sig9);
        self.edit_alpha = self.edit_alpha.map(sig9);
        self.quality_error = self.quality_error.map(sig9);
    }

    /// Checks the invariants that do not depend on other samples.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidSample {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(bad("empty id".into()));
        }
        if let Some((name, v)) = self.attributes.iter().find(|(_, &v)| v != 1 && v != -1) {
            return Err(bad(format!("attribute {name} = {v}, expected -1 or +1")));
        }
        if self.label.as_slice().iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(bad("label activation outside [0,1]".into()));
        }
        if let Some(l) = &self.latent {
            if l.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite latent".into()));
            }
        }
        if let Some(q) = self.quality_error {
            if !(q >= 0.0) {
                return Err(bad(format!("quality_error {q} is negative or NaN")));
            }
        }
        if let Some(a) = self.edit_alpha {
            if !a.is_finite() {
                return Err(bad("non-finite edit_alpha".into()));
            }
        }
        if self.is_augmented() {
            if self.parent_id.is_none() {
                return Err(bad("augmented sample missing parent_id".into()));
            }
            if self.edit_alpha.is_none() {
                return Err(bad("augmented sample missing edit_alpha".into()));
            }
            if self.edit_direction.is_none() {
                return Err(bad("augmented sample missing edit_direction".into()));
            }
        }
        Ok(())
    }
}
