//! Deterministic synthetic face world.
//!
//! Stands in for a pretrained generator, its inversion encoder, and a
//! landmark detector: latents factor into expression, attribute and nuisance
//! blocks, codes are a fixed linear mixing of those blocks, and landmarks and
//! blendshape labels are known exactly.

mod config;
mod geometry;
mod latent;
mod render;

use thiserror::Error;

pub use config::{WorldConfig, WorldParams, ATTRIBUTE_NAMES, MAX_EXPR};
pub use geometry::{landmarks_true, FaceGeometry, LandmarkLayout, EYE_HALF_SPACING};
pub use latent::{blendshape_label, decode_latent, encode, sample_latent, FactoredLatent};
pub use render::{beard_mask, eyewear_mask, render};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WorldError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("non-finite latent")]
    NonFinite,
    #[error("world config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
