//! Face geometry shared by the renderer and the landmark oracle.
//!
//! All lengths below are fractions of the image side; [`FaceGeometry`]
//! holds them converted to pixels for one latent.

use super::{FactoredLatent, WorldConfig, MAX_EXPR};
use crate::model::LandmarkSet;

pub(crate) const HEAD_CX: f64 = 0.5;
pub(crate) const HEAD_CY: f64 = 0.47;
pub(crate) const HEAD_RX: f64 = 0.36;
pub(crate) const HEAD_RY: f64 = 0.41;
const CHIN_DROP: f64 = 0.10;
const JAW_SHIFT: f64 = 0.16;

/// Horizontal distance from the face midline to each eye centre.
pub const EYE_HALF_SPACING: f64 = 0.1875;
const EYE_Y: f64 = 0.42;
const EYE_HALF_W: f64 = 0.07;
const EYE_H_MIN: f64 = 0.006;
const EYE_H_RANGE: f64 = 0.07;
const EYE_SPACING_COUPLING: f64 = 0.01;

const BROW_GAP: f64 = 0.10;
const BROW_RAISE: f64 = 0.06;
const BROW_HALF_LEN: f64 = 0.08;
const BROW_ARCH: f64 = 0.015;

const NOSE_TOP: f64 = 0.47;
const NOSE_BOTTOM: f64 = 0.60;
const NOSE_HALF_W: f64 = 0.04;

const MOUTH_Y: f64 = 0.72;
const MOUTH_HALF_W: f64 = 0.11;
const MOUTH_WIDTH_RANGE: f64 = 0.09;
const MOUTH_GAP_MIN: f64 = 0.004;
const MOUTH_GAP_RANGE: f64 = 0.14;
const SMILE: f64 = 0.10;
const LIP_THICK: f64 = 0.025;

pub(crate) const BEARD_TOP: f64 = 0.62;
/// Beard darkness is `sigmoid(BEARD_SHARPNESS * attr)`.
pub(crate) const BEARD_SHARPNESS: f64 = 3.0;

pub(crate) const GLASSES_RADIUS: f64 = 0.105;
pub(crate) const GLASSES_RIM: f64 = 0.018;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eye {
    pub cx: f64,
    pub cy: f64,
    pub half_w: f64,
    pub half_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Brow {
    pub cx: f64,
    pub y: f64,
    pub half_len: f64,
    pub arch: f64,
}

impl Brow {
    pub fn y_at(&self, t: f64) -> f64 {
        self.y - self.arch * (1.0 - t * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mouth {
    pub cx: f64,
    pub cy: f64,
    pub half_w: f64,
    pub gap: f64,
    pub smile: f64,
    pub thick: f64,
}

impl Mouth {
    pub fn inner_upper(&self, t: f64) -> f64 {
        self.cy - 0.5 * self.gap * (1.0 - t * t) - self.smile * t * t
    }
    pub fn inner_lower(&self, t: f64) -> f64 {
        self.cy + 0.5 * self.gap * (1.0 - t * t) - self.smile * t * t
    }
    pub fn outer_upper(&self, t: f64) -> f64 {
        self.inner_upper(t) - self.thick * (1.0 - t * t).max(0.0).sqrt()
    }
    pub fn outer_lower(&self, t: f64) -> f64 {
        self.inner_lower(t) + self.thick * (1.0 - t * t).max(0.0).sqrt()
    }
}

/// Pixel-space geometry of one synthetic face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGeometry {
    pub size: f64,
    pub head_cx: f64,
    pub head_cy: f64,
    pub head_rx: f64,
    pub head_ry: f64,
    pub chin_drop: f64,
    pub jaw_shift: f64,
    pub eyes: [Eye; 2],
    pub brows: [Brow; 2],
    pub nose_top: f64,
    pub nose_bottom: f64,
    pub nose_half_w: f64,
    pub mouth: Mouth,
    /// Beard darkness in `(0, 1)`.
    pub beard: f64,
    pub beard_top: f64,
    /// Eyewear opacity; zero when no frames are drawn.
    pub glasses: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl FaceGeometry {
    /// Geometry for `z`. Landmark-bearing parts depend only on the clamped
    /// expression and on `rho * attr`; noise never enters.
    pub fn new(z: &FactoredLatent, cfg: &WorldConfig) -> Self {
        let s = cfg.image_size() as f64;
        let rho = cfg.params().entanglement_rho;
        let mut e = [0.0; MAX_EXPR];
        for (dst, src) in e.iter_mut().zip(z.clamped_expr()) {
            *dst = src;
        }
        let beard_attr = z.attr.first().copied().unwrap_or(0.0);
        let glasses_attr = z.attr.get(1).copied().unwrap_or(0.0);
        let eye_shift = rho * glasses_attr;
        let mouth_shift = rho * beard_attr;

        let openness = |v: f64| ((v + 1.0) / 2.0).clamp(-0.2, 1.2);
        let mouth_open = openness(e[2] + mouth_shift);
        let chin_drop = s * CHIN_DROP * mouth_open;
        let jaw_shift = s * JAW_SHIFT * e[6];

        let half_spacing = s * (EYE_HALF_SPACING + EYE_SPACING_COUPLING * eye_shift);
        let eye = |side: f64, ctrl: f64| Eye {
            cx: s * HEAD_CX + side * half_spacing,
            cy: s * EYE_Y,
            half_w: s * EYE_HALF_W,
            half_h: s * (EYE_H_MIN + EYE_H_RANGE * openness(ctrl + eye_shift)),
        };
        let eyes = [eye(-1.0, e[0]), eye(1.0, e[1])];
        let brow = |eye: &Eye, ctrl: f64| Brow {
            cx: eye.cx,
            y: eye.cy - s * (BROW_GAP + BROW_RAISE * ctrl),
            half_len: s * BROW_HALF_LEN,
            arch: s * BROW_ARCH,
        };
        let brows = [brow(&eyes[0], e[4]), brow(&eyes[1], e[5])];

        let mouth = Mouth {
            cx: s * HEAD_CX + 0.5 * jaw_shift,
            cy: s * MOUTH_Y + 0.4 * chin_drop,
            half_w: s * (MOUTH_HALF_W + MOUTH_WIDTH_RANGE * e[3]),
            gap: s * (MOUTH_GAP_MIN + MOUTH_GAP_RANGE * mouth_open.max(0.0)),
            smile: s * SMILE * e[7],
            thick: s * LIP_THICK,
        };

        let glasses_level = sigmoid(glasses_attr);
        let glasses = if z.attr.len() > 1 && glasses_level > 0.5 {
            glasses_level
        } else {
            0.0
        };

        Self {
            size: s,
            head_cx: s * HEAD_CX,
            head_cy: s * HEAD_CY,
            head_rx: s * HEAD_RX,
            head_ry: s * HEAD_RY,
            chin_drop,
            jaw_shift,
            eyes,
            brows,
            nose_top: s * NOSE_TOP,
            nose_bottom: s * NOSE_BOTTOM,
            nose_half_w: s * NOSE_HALF_W,
            mouth,
            beard: if z.attr.is_empty() {
                0.0
            } else {
                sigmoid(BEARD_SHARPNESS * beard_attr)
            },
            beard_top: s * BEARD_TOP,
            glasses,
        }
    }

    /// Maps a point on the undeformed head ellipse onto the deformed jaw.
    pub(crate) fn warp_jaw(&self, x: f64, y: f64) -> (f64, f64) {
        let dy = y - self.head_cy;
        if dy <= 0.0 {
            return (x, y);
        }
        let frac = dy / self.head_ry;
        (x + self.jaw_shift * frac * frac, y + self.chin_drop * frac)
    }

    /// Inverse of [`FaceGeometry::warp_jaw`].
    pub(crate) fn unwarp_jaw(&self, x: f64, y: f64) -> (f64, f64) {
        let dy = y - self.head_cy;
        if dy <= 0.0 {
            return (x, y);
        }
        let frac = dy / (self.head_ry + self.chin_drop);
        (
            x - self.jaw_shift * frac * frac,
            self.head_cy + frac * self.head_ry,
        )
    }
}

/// Index ranges of each landmark group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkLayout {
    pub jaw: std::ops::Range<usize>,
    pub brows: [std::ops::Range<usize>; 2],
    pub eyes: [std::ops::Range<usize>; 2],
    pub eye_upper: usize,
    pub eye_lower: usize,
    pub left_eye_center: usize,
    pub right_eye_center: usize,
    pub nose: std::ops::Range<usize>,
    pub nose_bridge: usize,
    pub lips: std::ops::Range<usize>,
    pub lip_outer: usize,
    pub lip_inner: usize,
}

impl LandmarkLayout {
    /// Splits `k` (a multiple of 24) as 1/3 jaw, 1/6 brows, 1/4 eyes,
    /// 1/12 nose, 1/6 lips; for 240 that is 80/40/60/20/40.
    pub fn for_count(k: usize) -> Self {
        assert!(k.is_multiple_of(24) && k >= 96, "unsupported landmark count {k}");
        let jaw_n = k / 3;
        let brow_n = k / 12;
        let eye_n = k / 8;
        let nose_n = k / 12;
        let lip_n = k / 6;
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let jaw = take(jaw_n);
        let brows = [take(brow_n), take(brow_n)];
        let eyes = [take(eye_n), take(eye_n)];
        let nose = take(nose_n);
        let lips = take(lip_n);
        let eye_upper = eye_n / 2;
        let eye_lower = eye_n - 1 - eye_upper;
        Self {
            left_eye_center: eyes[0].end - 1,
            right_eye_center: eyes[1].end - 1,
            jaw,
            brows,
            eyes,
            eye_upper,
            eye_lower,
            nose_bridge: nose_n * 3 / 5,
            nose,
            lip_outer: lip_n * 3 / 10,
            lip_inner: lip_n / 2 - lip_n * 3 / 10,
            lips,
        }
    }

    pub fn count(&self) -> usize {
        self.lips.end
    }
}

fn spread(n: usize, inclusive: bool) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if inclusive {
            -1.0 + 2.0 * i as f64 / (n - 1) as f64
        } else {
            -1.0 + 2.0 * (i + 1) as f64 / (n + 1) as f64
        }
    })
}

/// Landmarks sampled at fixed stations along the geometry's curves.
pub fn landmarks_from_geometry(g: &FaceGeometry, layout: &LandmarkLayout) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(layout.count());

    // jaw: lower half of the head ellipse, left ear through chin to right ear
    let jaw_n = layout.jaw.len();
    for i in 0..jaw_n {
        let theta = std::f64::consts::PI * (1.0 - i as f64 / (jaw_n - 1) as f64);
        let (x, y) = (
            g.head_cx + g.head_rx * theta.cos(),
            g.head_cy + g.head_ry * theta.sin(),
        );
        let (wx, wy) = g.warp_jaw(x, y);
        pts.push([wx, wy]);
    }

    for (brow, range) in g.brows.iter().zip(&layout.brows) {
        for t in spread(range.len(), true) {
            pts.push([brow.cx + brow.half_len * t, brow.y_at(t)]);
        }
    }

    for eye in &g.eyes {
        for t in spread(layout.eye_upper, true) {
            let lift = eye.half_h * (1.0 - t * t).max(0.0).sqrt();
            pts.push([eye.cx + eye.half_w * t, eye.cy - lift]);
        }
        for t in spread(layout.eye_lower, false) {
            let drop = eye.half_h * (1.0 - t * t).max(0.0).sqrt();
            pts.push([eye.cx + eye.half_w * t, eye.cy + drop]);
        }
        pts.push([eye.cx, eye.cy]);
    }

    let bridge = layout.nose_bridge;
    for i in 0..bridge {
        let f = i as f64 / (bridge - 1) as f64;
        pts.push([g.head_cx, g.nose_top + f * (g.nose_bottom - g.nose_top)]);
    }
    for t in spread(layout.nose.len() - bridge, true) {
        pts.push([g.head_cx + g.nose_half_w * t, g.nose_bottom]);
    }

    let m = &g.mouth;
    let x_at = |t: f64| m.cx + m.half_w * t;
    for t in spread(layout.lip_outer, true) {
        pts.push([x_at(t), m.outer_upper(t)]);
    }
    for t in spread(layout.lip_outer, true) {
        pts.push([x_at(t), m.outer_lower(t)]);
    }
    for t in spread(layout.lip_inner, false) {
        pts.push([x_at(t), m.inner_upper(t)]);
    }
    for t in spread(layout.lip_inner, false) {
        pts.push([x_at(t), m.inner_lower(t)]);
    }
    debug_assert_eq!(pts.len(), layout.count());
    pts
}

/// Ground-truth landmarks of `z`.
pub fn landmarks_true(z: &FactoredLatent, cfg: &WorldConfig) -> LandmarkSet {
    let g = FaceGeometry::new(z, cfg);
    let layout = LandmarkLayout::for_count(cfg.landmark_count());
    LandmarkSet::new(landmarks_from_geometry(&g, &layout))
        .expect("geometry is finite")
        .clamped(cfg.image_size(), cfg.image_size())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::world::{sample_latent, WorldParams};

    fn world(rho: f64) -> WorldConfig {
        WorldConfig::new(WorldParams {
            entanglement_rho: rho,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn layout_matches_station_budget() {
        let l = LandmarkLayout::for_count(240);
        assert_eq!(l.jaw.len(), 80);
        assert_eq!(l.brows[0].len() + l.brows[1].len(), 40);
        assert_eq!(l.eyes[0].len() + l.eyes[1].len(), 60);
        assert_eq!(l.nose.len(), 20);
        assert_eq!(l.lips.len(), 40);
        assert_eq!(l.count(), 240);
        assert_eq!(l.eye_upper + l.eye_lower + 1, 30);
        assert_eq!(2 * (l.lip_outer + l.lip_inner), 40);
    }

    #[test]
    fn warp_inverts() {
        let cfg = world(0.05);
        let mut z = sample_latent(&mut stream(1, "g", 0), &cfg);
        z.expr[6] = 0.8;
        z.expr[2] = 0.9;
        let g = FaceGeometry::new(&z, &cfg);
        for (x, y) in [(30.0, 50.0), (10.0, 40.0), (33.0, 20.0)] {
            let (wx, wy) = g.warp_jaw(x, y);
            let (ux, uy) = g.unwarp_jaw(wx, wy);
            assert!((ux - x).abs() < 1e-9 && (uy - y).abs() < 1e-9);
        }
    }

    #[test]
    fn landmark_count_and_bounds() {
        let cfg = world(0.05);
        for i in 0..20 {
            let z = sample_latent(&mut stream(2, "g", i), &cfg);
            let l = landmarks_true(&z, &cfg);
            assert_eq!(l.len(), 240);
            assert!(l
                .points()
                .iter()
                .all(|p| (0.0..64.0).contains(&p[0]) && (0.0..64.0).contains(&p[1])));
        }
    }

    #[test]
    fn noise_and_attributes_do_not_move_landmarks_without_entanglement() {
        let cfg = world(0.0);
        let z = sample_latent(&mut stream(3, "g", 0), &cfg);
        let mut other = z.clone();
        other.noise.iter_mut().for_each(|n| *n = -*n + 0.7);
        assert_eq!(landmarks_true(&z, &cfg), landmarks_true(&other, &cfg));
        other.attr = vec![4.0, -3.0];
        assert_eq!(landmarks_true(&z, &cfg), landmarks_true(&other, &cfg));
    }

    #[test]
    fn noise_never_moves_landmarks() {
        let cfg = world(0.05);
        let z = sample_latent(&mut stream(3, "g", 1), &cfg);
        let mut other = z.clone();
        other.noise = vec![3.0; 6];
        assert_eq!(landmarks_true(&z, &cfg), landmarks_true(&other, &cfg));
    }

    #[test]
    fn eye_control_opens_lids_and_leaves_jaw() {
        let cfg = world(0.05);
        let layout = LandmarkLayout::for_count(240);
        let mut z = sample_latent(&mut stream(4, "g", 0), &cfg);
        z.expr[0] = -0.5;
        let mut wider = z.clone();
        wider.expr[0] = 0.5;
        let a = landmarks_true(&z, &cfg);
        let b = landmarks_true(&wider, &cfg);
        let spread = |l: &LandmarkSet| {
            let ys: Vec<f64> = l.points()[layout.eyes[0].clone()]
                .iter()
                .map(|p| p[1])
                .collect();
            ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!(spread(&b) > spread(&a));
        assert_eq!(&a.points()[layout.jaw.clone()], &b.points()[layout.jaw.clone()]);
    }

    #[test]
    fn open_mouth_spreads_lip_landmarks() {
        let cfg = world(0.05);
        let layout = LandmarkLayout::for_count(240);
        let mut open = sample_latent(&mut stream(5, "g", 0), &cfg);
        open.expr[2] = 1.0;
        let mut shut = open.clone();
        shut.expr[2] = -1.0;
        let spread = |z: &FactoredLatent| {
            let l = landmarks_true(z, &cfg);
            let ys: Vec<f64> = l.points()[layout.lips.clone()]
                .iter()
                .map(|p| p[1])
                .collect();
            ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!(spread(&open) > spread(&shut));
    }

    #[test]
    fn eye_centres_sit_at_spacing_constant() {
        let cfg = world(0.0);
        let layout = LandmarkLayout::for_count(240);
        let z = sample_latent(&mut stream(6, "g", 0), &cfg);
        let l = landmarks_true(&z, &cfg);
        let a = l.points()[layout.left_eye_center];
        let b = l.points()[layout.right_eye_center];
        assert!((b[0] - a[0] - 2.0 * EYE_HALF_SPACING * 64.0).abs() < 1e-9);
        assert!(a[0] < b[0]);
    }
}
