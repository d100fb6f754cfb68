use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{WorldConfig, WorldError};
use crate::model::{BlendshapeVector, LatentCode};
use crate::rng::SeedStream;

/// A synthetic face's latent, split into expression, attribute and nuisance
/// blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredLatent {
    pub expr: Vec<f64>,
    pub attr: Vec<f64>,
    pub noise: Vec<f64>,
}

impl FactoredLatent {
    pub fn zeros(cfg: &WorldConfig) -> Self {
        Self {
            expr: vec![0.0; cfg.d_expr()],
            attr: vec![0.0; cfg.d_attr()],
            noise: vec![0.0; cfg.d_noise()],
        }
    }

    /// Concatenation `[expr; attr; noise]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.expr
            .iter()
            .chain(&self.attr)
            .chain(&self.noise)
            .copied()
            .collect()
    }

    pub fn from_vec(v: &[f64], cfg: &WorldConfig) -> Result<Self, WorldError> {
        check_dim(cfg.dim(), v.len())?;
        let (e, rest) = v.split_at(cfg.d_expr());
        let (a, n) = rest.split_at(cfg.d_attr());
        Ok(Self {
            expr: e.to_vec(),
            attr: a.to_vec(),
            noise: n.to_vec(),
        })
    }

    pub fn check(&self, cfg: &WorldConfig) -> Result<(), WorldError> {
        check_dim(cfg.d_expr(), self.expr.len())?;
        check_dim(cfg.d_attr(), self.attr.len())?;
        check_dim(cfg.d_noise(), self.noise.len())?;
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(WorldError::NonFinite);
        }
        Ok(())
    }

    /// Expression with every entry clamped to `[-1, 1]`.
    pub fn clamped_expr(&self) -> Vec<f64> {
        self.expr.iter().map(|e| e.clamp(-1.0, 1.0)).collect()
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<(), WorldError> {
    if expected == actual {
        Ok(())
    } else {
        Err(WorldError::Dimension { expected, actual })
    }
}

/// Draws expression uniformly from `[-1,1]`, attributes from `[-1.5,1.5]`,
/// noise from a standard normal.
pub fn sample_latent(stream: &mut SeedStream, cfg: &WorldConfig) -> FactoredLatent {
    let expr = (0..cfg.d_expr())
        .map(|_| stream.random_range(-1.0..=1.0))
        .collect();
    let attr = (0..cfg.d_attr())
        .map(|_| stream.random_range(-1.5..=1.5))
        .collect();
    let noise = (0..cfg.d_noise())
        .map(|_| StandardNormal.sample(stream))
        .collect();
    FactoredLatent { expr, attr, noise }
}

/// Synthetic inversion: `w = M·vec(z) + η` with `η ~ N(0, σ²I)`.
pub fn encode(
    z: &FactoredLatent,
    cfg: &WorldConfig,
    stream: &mut SeedStream,
) -> Result<LatentCode, WorldError> {
    z.check(cfg)?;
    let mut w = cfg.mix(&z.to_vec());
    let sigma = cfg.params().encoder_noise_sigma;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma validated");
        for v in w.iter_mut() {
            *v += normal.sample(stream);
        }
    }
    Ok(LatentCode::new(w.as_slice().to_vec())?)
}

/// `vec(z) = M⁻¹·w`, expression clamped to `[-1, 1]`.
pub fn decode_latent(w: &LatentCode, cfg: &WorldConfig) -> Result<FactoredLatent, WorldError> {
    check_dim(cfg.dim(), w.dim())?;
    let v = cfg.unmix(w.as_slice());
    let mut z = FactoredLatent::from_vec(v.as_slice(), cfg)?;
    z.expr = z.clamped_expr();
    Ok(z)
}

/// Ground-truth activations `(expr + 1) / 2`.
pub fn blendshape_label(z: &FactoredLatent) -> BlendshapeVector {
    BlendshapeVector::clamped(
        z.expr
            .iter()
            .map(|e| (e.clamp(-1.0, 1.0) + 1.0) / 2.0)
            .collect(),
    )
}
