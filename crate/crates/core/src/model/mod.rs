//! Domain types shared by every stage, and the manifest format.

mod manifest;
pub mod numfmt;
mod sample;
mod types;

use thiserror::Error;

pub use manifest::{read_manifest, write_manifest, Manifest, ManifestError, FORMAT_VERSION};
pub use sample::{DatasetSample, ImageRef, SampleSource};
pub use types::{BlendshapeVector, ImageGrid, LandmarkSet, LatentCode, MIN_IMAGE_SIDE};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{0}")]
    Invalid(String),
    #[error("sample {id}: {reason}")]
    InvalidSample { id: String, reason: String },
}
