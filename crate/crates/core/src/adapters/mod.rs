//! Backend interfaces: image generator, latent encoder and landmark
//! detector.
//!
//! [`SyntheticBackend`] implements all three in process over the synthetic
//! world. [`ExchangeBackend`] forwards every call over a directory-based file
//! protocol (see `PROTOCOL.md`) so an external process, such as a Python
//! script driving pretrained networks, can answer instead.
//! [`LoopbackServer`] is the other end of that protocol backed by a
//! synthetic world, used to check that both routes agree.

mod exchange;
pub mod laxb;
mod loopback;
mod synthetic;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ImageGrid, LandmarkSet, LatentCode, ModelError};

pub use exchange::{ExchangeBackend, RequestMeta, ResponseMeta, LEASE_FILE};
pub use laxb::Tensor;
pub use loopback::{synthetic_handler, LoopbackServer, Reply};
pub use synthetic::SyntheticBackend;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AdapterError {
    #[error("{kind} request {request_id} timed out after {seconds:.1}s")]
    Timeout {
        kind: BackendKind,
        request_id: String,
        seconds: f64,
    },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response has {got} of {expected} items; missing indices {missing:?}")]
    CountMismatch {
        expected: usize,
        got: usize,
        missing: Vec<usize>,
    },
    #[error("response item {index}: {message}")]
    Validation { index: usize, message: String },
    #[error("request item {index}: {message}")]
    BadRequest { index: usize, message: String },
    #[error("exchange directory {0} holds a lease from an unfinished exchange; remove it if no exchange is running")]
    StaleLease(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("backend reported: {0}")]
    Backend(String),
}

impl AdapterError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Generator,
    Encoder,
    Landmarker,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Generator => "generator",
            Self::Encoder => "encoder",
            Self::Landmarker => "landmarker",
        })
    }
}

/// Shape contract for an external backend.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendDescriptor {
    pub exchange_dir: PathBuf,
    pub latent_dim: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub landmark_count: usize,
    pub timeout: Duration,
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

impl BackendDescriptor {
    pub fn new(
        exchange_dir: impl Into<PathBuf>,
        latent_dim: usize,
        image_size: usize,
        landmark_count: usize,
    ) -> Self {
        Self {
            exchange_dir: exchange_dir.into(),
            latent_dim,
            image_height: image_size,
            image_width: image_size,
            landmark_count,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        if self.latent_dim == 0
            || self.image_height == 0
            || self.image_width == 0
            || self.landmark_count == 0
        {
            return Err(AdapterError::Malformed(format!(
                "descriptor has a zero dimension: {self:?}"
            )));
        }
        if self.timeout.is_zero() {
            return Err(AdapterError::Malformed("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Latent code to image.
pub trait Generator: Send + Sync {
    fn latent_dim(&self) -> usize;
    fn decode(&self, codes: &[LatentCode]) -> Result<Vec<ImageGrid>, AdapterError>;
}

/// Image to latent code.
pub trait Encoder: Send + Sync {
    fn encode(&self, images: &[ImageGrid]) -> Result<Vec<LatentCode>, AdapterError>;
}

/// Image to landmarks. `None` marks a per-image detector failure.
pub trait Landmarker: Send + Sync {
    fn landmark_count(&self) -> usize;
    fn landmarks(&self, images: &[ImageGrid]) -> Result<Vec<Option<LandmarkSet>>, AdapterError>;
}

/// The three backends a pipeline run talks to.
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub encoder: Arc<dyn Encoder>,
    pub landmarker: Arc<dyn Landmarker>,
}

impl Backends {
    pub fn synthetic(backend: Arc<SyntheticBackend>) -> Self {
        Self {
            generator: backend.clone(),
            encoder: backend.clone(),
            landmarker: backend,
        }
    }

    pub fn exchange(backend: Arc<ExchangeBackend>) -> Self {
        Self {
            generator: backend.clone(),
            encoder: backend.clone(),
            landmarker: backend,
        }
    }
}

pub(crate) fn images_to_tensor(images: &[ImageGrid]) -> Result<Tensor, AdapterError> {
    let (h, w) = (images[0].height(), images[0].width());
    let mut data = Vec::with_capacity(images.len() * h * w * 3);
    for (i, img) in images.iter().enumerate() {
        if (img.height(), img.width()) != (h, w) {
            return Err(AdapterError::BadRequest {
                index: i,
                message: format!(
                    "image is {}x{}, batch is {h}x{w}",
                    img.height(),
                    img.width()
                ),
            });
        }
        data.extend_from_slice(img.pixels());
    }
    Tensor::new(vec![images.len(), h, w, 3], data)
}

pub(crate) fn tensor_to_images(t: &Tensor, h: usize, w: usize) -> Result<Vec<ImageGrid>, AdapterError> {
    if t.dims.len() != 4 || t.dims[1..] != [h, w, 3] {
        return Err(AdapterError::Malformed(format!(
            "image tensor dims {:?}, expected [n, {h}, {w}, 3]",
            t.dims
        )));
    }
    (0..t.rows())
        .map(|i| {
            ImageGrid::new(h, w, t.row(i).to_vec()).map_err(|e| AdapterError::Validation {
                index: i,
                message: e.to_string(),
            })
        })
        .collect()
}

pub(crate) fn codes_to_tensor(codes: &[LatentCode], d: usize) -> Result<Tensor, AdapterError> {
    let mut data = Vec::with_capacity(codes.len() * d);
    for (i, c) in codes.iter().enumerate() {
        if c.dim() != d {
            return Err(AdapterError::BadRequest {
                index: i,
                message: format!("code length {}, expected {d}", c.dim()),
            });
        }
        data.extend(c.as_slice().iter().map(|&v| v as f32));
    }
    Tensor::new(vec![codes.len(), d], data)
}

pub(crate) fn tensor_to_codes(t: &Tensor, d: usize) -> Result<Vec<LatentCode>, AdapterError> {
    if t.dims.len() != 2 {
        return Err(AdapterError::Malformed(format!(
            "code tensor dims {:?}, expected [n, {d}]",
            t.dims
        )));
    }
    if t.dims[1] != d {
        return Err(AdapterError::Validation {
            index: 0,
            message: format!("code length {}, expected {d}", t.dims[1]),
        });
    }
    (0..t.rows())
        .map(|i| {
            LatentCode::new(t.row(i).iter().map(|&v| f64::from(v)).collect()).map_err(
                |e: ModelError| AdapterError::Validation {
                    index: i,
                    message: e.to_string(),
                },
            )
        })
        .collect()
}

/// Rows containing any NaN are the detector-failure sentinel.
pub(crate) fn landmarks_to_tensor(sets: &[Option<LandmarkSet>], k: usize) -> Tensor {
    let mut data = Vec::with_capacity(sets.len() * k * 2);
    for s in sets {
        match s {
            Some(s) => data.extend(s.points().iter().flat_map(|p| [p[0] as f32, p[1] as f32])),
            None => data.extend(std::iter::repeat_n(f32::NAN, k * 2)),
        }
    }
    Tensor {
        dims: vec![sets.len(), k, 2],
        data,
    }
}

pub(crate) fn tensor_to_landmarks(
    t: &Tensor,
    k: usize,
) -> Result<Vec<Option<LandmarkSet>>, AdapterError> {
    if t.dims.len() != 3 || t.dims[2] != 2 {
        return Err(AdapterError::Malformed(format!(
            "landmark tensor dims {:?}, expected [n, {k}, 2]",
            t.dims
        )));
    }
    if t.dims[1] != k {
        return Err(AdapterError::Validation {
            index: 0,
            message: format!("{} landmarks per image, expected {k}", t.dims[1]),
        });
    }
    (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            if row.iter().any(|v| v.is_nan()) {
                return Ok(None);
            }
            let pts = row
                .chunks_exact(2)
                .map(|p| [f64::from(p[0]), f64::from(p[1])])
                .collect();
            LandmarkSet::new(pts)
                .map(Some)
                .map_err(|e| AdapterError::Validation {
                    index: i,
                    message: e.to_string(),
                })
        })
        .collect()
}
