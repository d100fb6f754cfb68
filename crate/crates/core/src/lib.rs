//! Latent-space attribute augmentation for face regression datasets.
//!
//! The crate covers the whole workflow: fit linear-SVM attribute directions
//! on encoded latents, push codes along them by a random amount, keep only
//! edits whose landmarks still agree with the source image, and train a
//! blendshape regressor on the mixed data. A deterministic synthetic face
//! world stands in for the pretrained generator, encoder and landmark
//! detector; [`adapters`] lets real ones plug in over a file protocol.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapters;
pub mod augment;
pub mod directions;
pub mod hash;
pub mod imageio;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod quality;
pub mod regression;
pub mod rng;
pub mod world;
