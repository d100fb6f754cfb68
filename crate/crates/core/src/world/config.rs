use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::WorldError;
use crate::hash::sha256_hex;
use crate::rng;

/// Attribute names by index in the attribute block of the latent.
pub const ATTRIBUTE_NAMES: [&str; 2] = ["beard", "glasses"];

/// Number of expression controls the face rig understands.
pub const MAX_EXPR: usize = 8;

const MAX_CONDITION: f64 = 1e3;

/// Serializable knobs of the synthetic world. The mixing matrix is derived
/// from `seed`, so this struct alone determines the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub d_expr: usize,
    pub d_attr: usize,
    pub d_noise: usize,
    pub image_size: usize,
    pub landmark_count: usize,
    pub encoder_noise_sigma: f64,
    pub entanglement_rho: f64,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            d_expr: 8,
            d_attr: 2,
            d_noise: 6,
            image_size: 64,
            landmark_count: 240,
            encoder_noise_sigma: 0.01,
            entanglement_rho: 0.05,
            seed: 0,
        }
    }
}

/// A validated world: parameters plus the latent mixing matrix `M` and its
/// inverse. Encoded codes are `w = M·[expr; attr; noise]`.
#[derive(Debug, Clone)]
pub struct WorldConfig {
    params: WorldParams,
    mixing: DMatrix<f64>,
    unmixing: DMatrix<f64>,
}

impl WorldConfig {
    pub fn new(params: WorldParams) -> Result<Self, WorldError> {
        let p = &params;
        if p.d_expr == 0 || p.d_expr > MAX_EXPR {
            return Err(WorldError::Config(format!(
                "d_expr must be in 1..={MAX_EXPR}, got {}",
                p.d_expr
            )));
        }
        if p.d_attr == 0 || p.d_attr > ATTRIBUTE_NAMES.len() {
            return Err(WorldError::Config(format!(
                "d_attr must be in 1..={}, got {}",
                ATTRIBUTE_NAMES.len(),
                p.d_attr
            )));
        }
        if p.image_size < crate::model::MIN_IMAGE_SIDE {
            return Err(WorldError::Config(format!(
                "image_size {} below {}",
                p.image_size,
                crate::model::MIN_IMAGE_SIDE
            )));
        }
        if p.landmark_count < 96 || !p.landmark_count.is_multiple_of(24) {
            return Err(WorldError::Config(format!(
                "landmark_count must be a multiple of 24 and at least 96, got {}",
                p.landmark_count
            )));
        }
        if !(p.encoder_noise_sigma >= 0.0 && p.encoder_noise_sigma.is_finite()) {
            return Err(WorldError::Config("encoder_noise_sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&p.entanglement_rho) {
            return Err(WorldError::Config("entanglement_rho must be in [0,1)".into()));
        }
        let mixing = mixing_matrix(p.dim(), p.seed);
        Self::with_mixing(params, mixing)
    }

    /// Builds a world around an explicit mixing matrix.
    pub fn with_mixing(params: WorldParams, mixing: DMatrix<f64>) -> Result<Self, WorldError> {
        let d = params.dim();
        if mixing.nrows() != d || mixing.ncols() != d {
            return Err(WorldError::Dimension {
                expected: d,
                actual: mixing.nrows(),
            });
        }
        let sv = mixing.clone().svd(false, false).singular_values;
        let (lo, hi) = (sv.min(), sv.max());
        if !(lo > 0.0) || hi / lo >= MAX_CONDITION {
            return Err(WorldError::Config(format!(
                "mixing matrix condition number {} not below {MAX_CONDITION}",
                hi / lo
            )));
        }
        let unmixing = mixing
            .clone()
            .try_inverse()
            .ok_or_else(|| WorldError::Config("mixing matrix is singular".into()))?;
        Ok(Self {
            params,
            mixing,
            unmixing,
        })
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn d_expr(&self) -> usize {
        self.params.d_expr
    }

    pub fn d_attr(&self) -> usize {
        self.params.d_attr
    }

    pub fn d_noise(&self) -> usize {
        self.params.d_noise
    }

    pub fn image_size(&self) -> usize {
        self.params.image_size
    }

    pub fn landmark_count(&self) -> usize {
        self.params.landmark_count
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    pub fn unmixing(&self) -> &DMatrix<f64> {
        &self.unmixing
    }

    /// Spectral norm of `M⁻¹`.
    pub fn unmixing_norm(&self) -> f64 {
        self.unmixing.clone().svd(false, false).singular_values.max()
    }

    /// Index of attribute `name` in the attribute block.
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        ATTRIBUTE_NAMES[..self.d_attr()]
            .iter()
            .position(|&n| n == name)
    }

    pub fn attribute_names(&self) -> &'static [&'static str] {
        &ATTRIBUTE_NAMES[..self.params.d_attr]
    }

    /// Unit vector in code space along which attribute `index` (alone) grows:
    /// `M·e / ‖M·e‖` for the attribute's latent axis `e`.
    pub fn attribute_axis(&self, index: usize) -> Vec<f64> {
        let col = self.mixing.column(self.params.d_expr + index);
        let norm = col.norm();
        col.iter().map(|v| v / norm).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.params).expect("world params serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, WorldError> {
        let params: WorldParams =
            toml::from_str(text).map_err(|e| WorldError::Config(e.to_string()))?;
        Self::new(params)
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub(crate) fn mix(&self, v: &[f64]) -> DVector<f64> {
        &self.mixing * DVector::from_column_slice(v)
    }

    pub(crate) fn unmix(&self, v: &[f64]) -> DVector<f64> {
        &self.unmixing * DVector::from_column_slice(v)
    }
}

impl WorldParams {
    pub fn dim(&self) -> usize {
        self.d_expr + self.d_attr + self.d_noise
    }
}

/// Orthogonal factor of a seeded Gaussian matrix, columns scaled by factors
/// drawn from `[0.8, 1.25]`.
fn mixing_matrix(d: usize, seed: u64) -> DMatrix<f64> {
    let mut gauss = rng::stream(seed, "world/mixing", 0);
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut gauss));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // fix column signs so the factorization is unique
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut scales = rng::stream(seed, "world/scales", 0);
    for j in 0..d {
        let s: f64 = scales.random_range(0.8..=1.25);
        q.column_mut(j).scale_mut(s);
    }
    q
}
