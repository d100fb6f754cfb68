//! Rasterizer for the synthetic face.
//!
//! Shapes are composited back to front with one-pixel soft edges from
//! approximate signed distances, so landmarks move the image smoothly.

use super::geometry::{FaceGeometry, GLASSES_RADIUS, GLASSES_RIM};
use super::{FactoredLatent, WorldConfig, WorldError};
use crate::model::ImageGrid;

type Rgb = [f64; 3];

const BACKGROUND: Rgb = [0.36, 0.45, 0.55];
const SKIN: Rgb = [0.87, 0.72, 0.60];
const BEARD: Rgb = [0.22, 0.15, 0.11];
const BEARD_MAX_COVER: f64 = 0.85;
const NOSE: Rgb = [0.70, 0.52, 0.42];
const SCLERA: Rgb = [0.96, 0.96, 0.94];
const PUPIL: Rgb = [0.12, 0.20, 0.28];
const LID: Rgb = [0.30, 0.18, 0.14];
const BROW: Rgb = [0.28, 0.18, 0.12];
const LIPS: Rgb = [0.78, 0.38, 0.38];
const MOUTH_INSIDE: Rgb = [0.18, 0.05, 0.06];
const FRAME: Rgb = [0.08, 0.08, 0.10];
const LENS_TINT: f64 = 0.35;

/// Spatial frequencies (cycles per image) and phases of the background
/// texture; one row per noise dimension, cycled when there are more.
const TEXTURE: [[f64; 3]; 6] = [
    [1.0, 2.0, 0.3],
    [3.0, -1.0, 1.1],
    [-2.0, 3.0, 2.0],
    [4.0, 1.0, 0.7],
    [1.0, -4.0, 2.9],
    [5.0, 3.0, 1.7],
];
const TEXTURE_AMPLITUDE: f64 = 0.06;

fn cover(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

fn blend(dst: &mut Rgb, src: Rgb, alpha: f64) {
    if alpha <= 0.0 {
        return;
    }
    for c in 0..3 {
        dst[c] += (src[c] - dst[c]) * alpha;
    }
}

/// Approximate signed distance to an axis-aligned ellipse.
fn ellipse_sd(dx: f64, dy: f64, rx: f64, ry: f64) -> f64 {
    let q = ((dx / rx).powi(2) + (dy / ry).powi(2)).sqrt();
    if q < 1e-12 {
        return -rx.min(ry);
    }
    let gx = dx / (rx * rx * q);
    let gy = dy / (ry * ry * q);
    (q - 1.0) / (gx * gx + gy * gy).sqrt().max(1e-12)
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((px - a.0) * vx + (py - a.1) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((px - a.0 - t * vx).powi(2) + (py - a.1 - t * vy).powi(2)).sqrt()
}

impl FaceGeometry {
    pub(crate) fn head_coverage(&self, x: f64, y: f64) -> f64 {
        let (ux, uy) = self.unwarp_jaw(x, y);
        cover(ellipse_sd(
            ux - self.head_cx,
            uy - self.head_cy,
            self.head_rx,
            self.head_ry,
        ))
    }

    /// Fraction of full beard cover at a pixel centre, before darkness.
    pub(crate) fn beard_region(&self, x: f64, y: f64) -> f64 {
        self.head_coverage(x, y) * ((y - self.beard_top) / 2.0 + 0.5).clamp(0.0, 1.0)
    }

    /// Eyewear coverage split into (frame, lens) at a pixel centre,
    /// independent of opacity.
    pub(crate) fn glasses_region(&self, x: f64, y: f64) -> (f64, f64) {
        let r = GLASSES_RADIUS * self.size;
        let rim = GLASSES_RIM * self.size;
        let mut frame: f64 = 0.0;
        let mut lens: f64 = 0.0;
        for eye in &self.eyes {
            let d = ((x - eye.cx).powi(2) + (y - eye.cy).powi(2)).sqrt();
            frame = frame.max(cover((d - r).abs() - rim / 2.0));
            lens = lens.max(cover(d - r));
        }
        let [l, rgt] = self.eyes;
        let bridge = segment_distance(x, y, (l.cx + r, l.cy), (rgt.cx - r, rgt.cy));
        frame = frame.max(cover(bridge - rim / 2.0));
        for (eye, side) in [(l, -1.0), (rgt, 1.0)] {
            let temple = segment_distance(
                x,
                y,
                (eye.cx + side * r, eye.cy),
                (self.head_cx + side * self.head_rx * 1.02, eye.cy - 0.02 * self.size),
            );
            frame = frame.max(cover(temple - rim / 2.0));
        }
        (frame, lens)
    }

    fn background(&self, z: &FactoredLatent, x: f64, y: f64) -> Rgb {
        let mut shade = 0.0;
        for (n, row) in z.noise.iter().zip(TEXTURE.iter().cycle()) {
            let phase = std::f64::consts::TAU * (row[0] * x + row[1] * y) / self.size + row[2];
            shade += n * phase.sin();
        }
        let shade = TEXTURE_AMPLITUDE * shade / (z.noise.len().max(1) as f64).sqrt();
        BACKGROUND.map(|c| c + shade)
    }

    fn shade_pixel(&self, z: &FactoredLatent, x: f64, y: f64) -> Rgb {
        let mut px = self.background(z, x, y);
        let head = self.head_coverage(x, y);
        blend(&mut px, SKIN, head);
        blend(
            &mut px,
            BEARD,
            BEARD_MAX_COVER * self.beard * self.beard_region(x, y),
        );

        let nose_w = 0.012 * self.size;
        let bridge = segment_distance(
            x,
            y,
            (self.head_cx, self.nose_top),
            (self.head_cx, self.nose_bottom),
        );
        let base = segment_distance(
            x,
            y,
            (self.head_cx - self.nose_half_w, self.nose_bottom),
            (self.head_cx + self.nose_half_w, self.nose_bottom),
        );
        blend(&mut px, NOSE, cover(bridge.min(base) - nose_w));

        for eye in &self.eyes {
            let (dx, dy) = (x - eye.cx, y - eye.cy);
            if dx.abs() > eye.half_w + 2.0 || dy.abs() > eye.half_h + 2.0 {
                continue;
            }
            let sd = ellipse_sd(dx, dy, eye.half_w, eye.half_h);
            let inside = cover(sd);
            blend(&mut px, SCLERA, inside);
            let pupil_r = 0.028 * self.size;
            let pupil = cover((dx * dx + dy * dy).sqrt() - pupil_r);
            blend(&mut px, PUPIL, pupil * inside);
            blend(&mut px, LID, cover(sd.abs() - 0.45));
        }

        let brow_w = 0.02 * self.size;
        for brow in &self.brows {
            let t = (x - brow.cx) / brow.half_len;
            if t.abs() > 1.0 + 2.0 / brow.half_len {
                continue;
            }
            let tc = t.clamp(-1.0, 1.0);
            let along = (t.abs() - 1.0).max(0.0) * brow.half_len;
            let across = (y - brow.y_at(tc)).abs();
            blend(&mut px, BROW, cover(across.max(along) - brow_w / 2.0));
        }

        let m = &self.mouth;
        let t = (x - m.cx) / m.half_w;
        if t.abs() <= 1.0 + 1.0 / m.half_w {
            let tc = t.clamp(-1.0, 1.0);
            let side = (t.abs() - 1.0) * m.half_w;
            let outer = (m.outer_upper(tc) - y).max(y - m.outer_lower(tc)).max(side);
            blend(&mut px, LIPS, cover(outer));
            let inner = (m.inner_upper(tc) - y).max(y - m.inner_lower(tc)).max(side);
            blend(&mut px, MOUTH_INSIDE, cover(inner));
        }

        if self.glasses > 0.0 {
            let (frame, lens) = self.glasses_region(x, y);
            let tint = 1.0 - LENS_TINT * self.glasses * lens;
            px = px.map(|c| c * tint);
            blend(&mut px, FRAME, self.glasses * frame);
        }
        px
    }
}

/// Renders `z` to an 8-bit-exact RGB image.
pub fn render(z: &FactoredLatent, cfg: &WorldConfig) -> Result<ImageGrid, WorldError> {
    z.check(cfg)?;
    let g = FaceGeometry::new(z, cfg);
    let n = cfg.image_size();
    let mut pixels = Vec::with_capacity(n * n * 3);
    for row in 0..n {
        for col in 0..n {
            let rgb = g.shade_pixel(z, col as f64 + 0.5, row as f64 + 0.5);
            pixels.extend(rgb.iter().map(|&c| c.clamp(0.0, 1.0) as f32));
        }
    }
    Ok(ImageGrid::new(n, n, pixels)?.quantized())
}

fn region_mask(n: usize, f: impl Fn(f64, f64) -> bool) -> Vec<bool> {
    (0..n * n)
        .map(|i| f((i % n) as f64 + 0.5, (i / n) as f64 + 0.5))
        .collect()
}

/// Pixels the beard can touch for the geometry of `z`.
pub fn beard_mask(z: &FactoredLatent, cfg: &WorldConfig) -> Vec<bool> {
    let g = FaceGeometry::new(z, cfg);
    region_mask(cfg.image_size(), |x, y| g.beard_region(x, y) > 0.0)
}

/// Pixels eyewear can touch (frames or lens tint) for the geometry of `z`.
pub fn eyewear_mask(z: &FactoredLatent, cfg: &WorldConfig) -> Vec<bool> {
    let g = FaceGeometry::new(z, cfg);
    region_mask(cfg.image_size(), |x, y| {
        let (frame, lens) = g.glasses_region(x, y);
        frame > 0.0 || lens > 0.0
    })
}
