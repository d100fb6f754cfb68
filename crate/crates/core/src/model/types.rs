use serde::{Deserialize, Serialize};

use super::ModelError;

/// A point in a generator's latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentCode(Vec<f64>);

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!("latent entry {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Rounds every entry through `f32`, the precision generator backends
    /// operate at.
    pub fn to_backend_precision(&self) -> Self {
        Self(self.0.iter().map(|&v| v as f32 as f64).collect())
    }

    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }
}

pub const MIN_IMAGE_SIDE: usize = 16;

/// An RGB raster with channel values in `[0, 1]`, stored row-major HWC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self, ModelError> {
        if height < MIN_IMAGE_SIDE || width < MIN_IMAGE_SIDE {
            return Err(ModelError::Invalid(format!(
                "image {height}x{width} smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
            )));
        }
        if pixels.len() != height * width * 3 {
            return Err(ModelError::Invalid(format!(
                "image buffer has {} values, expected {}",
                pixels.len(),
                height * width * 3
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(ModelError::Invalid(format!(
                "pixel value {} at offset {i} outside [0,1]",
                pixels[i]
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self, ModelError> {
        let pixels = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> [f32; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    /// 8-bit RGB bytes, rounding to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self, ModelError> {
        Self::new(
            height,
            width,
            bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )
    }

    /// Snaps every channel to the 8-bit grid so the in-memory image equals
    /// what a lossless 8-bit file would store.
    pub fn quantized(&self) -> Self {
        Self::from_rgb8(self.height, self.width, &self.to_rgb8()).expect("dimensions unchanged")
    }

    /// Mean channel intensity over pixels where `mask` is true.
    pub fn masked_mean(&self, mask: &[bool]) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            sum += self.pixels[i * 3..i * 3 + 3]
                .iter()
                .map(|&v| f64::from(v))
                .sum::<f64>();
            n += 3;
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// An ordered set of 2-D landmark positions in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkSet(Vec<[f64; 2]>);

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self, ModelError> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("landmark coordinate".into()));
        }
        Ok(Self(points))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.0
    }

    /// Clamps every point into `[0, width) x [0, height)`.
    pub fn clamped(mut self, width: usize, height: usize) -> Self {
        let max_x = width as f64 - 1e-6;
        let max_y = height as f64 - 1e-6;
        for p in &mut self.0 {
            p[0] = p[0].clamp(0.0, max_x);
            p[1] = p[1].clamp(0.0, max_y);
        }
        self
    }

    pub fn to_backend_precision(&self) -> Self {
        Self(
            self.0
                .iter()
                .map(|p| [p[0] as f32 as f64, p[1] as f32 as f64])
                .collect(),
        )
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|p| [p[0] * c, p[1] * c]).collect())
    }
}

/// Blendshape activations, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlendshapeVector(Vec<f64>);

impl BlendshapeVector {
    pub fn new(activations: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(i) = activations.iter().position(|a| !(0.0..=1.0).contains(a)) {
            return Err(ModelError::Invalid(format!(
                "activation {i} = {} outside [0,1]",
                activations[i]
            )));
        }
        Ok(Self(activations))
    }

    /// Clamps into `[0, 1]`; non-finite entries become 0.5.
    pub fn clamped(values: Vec<f64>) -> Self {
        Self(
            values
                .into_iter()
                .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.5 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_rejects_nan() {
        assert!(LatentCode::new(vec![0.0, f64::NAN]).is_err());
        assert_eq!(LatentCode::zeros(3).dim(), 3);
    }

    #[test]
    fn image_bounds_checked() {
        assert!(ImageGrid::filled(8, 32, [0.5; 3]).is_err());
        assert!(ImageGrid::new(16, 16, vec![1.5; 16 * 16 * 3]).is_err());
        assert!(ImageGrid::new(16, 16, vec![0.5; 10]).is_err());
        let img = ImageGrid::filled(16, 20, [0.1, 0.2, 0.3]).unwrap();
        assert_eq!(img.get(15, 19), [0.1, 0.2, 0.3]);
    }

    #[test]
    fn quantize_is_idempotent() {
        let img = ImageGrid::filled(16, 16, [0.123, 0.5, 0.999]).unwrap();
        let q = img.quantized();
        assert_eq!(q, q.quantized());
        assert_eq!(q.to_rgb8(), img.to_rgb8());
    }

    #[test]
    fn landmarks_clamp_into_frame() {
        let l = LandmarkSet::new(vec![[-3.0, 70.0], [10.0, 10.0]])
            .unwrap()
            .clamped(64, 64);
        assert_eq!(l.points()[0][0], 0.0);
        assert!(l.points()[0][1] < 64.0);
        assert_eq!(l.points()[1], [10.0, 10.0]);
    }

    #[test]
    fn blendshape_range() {
        assert!(BlendshapeVector::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(BlendshapeVector::new(vec![1.01]).is_err());
        assert_eq!(
            BlendshapeVector::clamped(vec![-1.0, 2.0]).as_slice(),
            &[0.0, 1.0]
        );
    }
}
