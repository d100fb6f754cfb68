//! Reference computations that share no code with the library under test.

use std::collections::BTreeSet;

use latentaug::adapters::{Landmarker, SyntheticBackend};
use latentaug::directions::{DirectionMeta, SemanticDirection};
use latentaug::model::{ImageRef, LandmarkSet, LatentCode, Manifest};
use latentaug::quality::EyeStations;
use latentaug::rng::stream;
use latentaug::world::{decode_latent, landmarks_true, WorldConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type Split = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Up to six points in up to three dimensions, split by a random
/// hyperplane with a gap. `None` when the draw ran short.
pub fn separable_instance(case: u64) -> Option<Split> {
    let mut s = stream(11, "acceptance/margin", case);
    let dim = s.random_range(1..=3usize);
    let n = s.random_range(4..=6usize);
    let axis: Vec<f64> = (0..dim).map(|_| s.random_range(-1.0..1.0)).collect();
    let offset = s.random_range(-0.5..0.5);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for _ in 0..1000 {
        if pos.len() + neg.len() == n {
            break;
        }
        let x: Vec<f64> = (0..dim).map(|_| s.random_range(-2.0..2.0)).collect();
        let score = dot(&x, &axis) + offset;
        if score > 0.1 && pos.len() < n - 2 {
            pos.push(x);
        } else if score < -0.1 && neg.len() < n - 2 {
            neg.push(x);
        }
    }
    (pos.len() + neg.len() == n).then_some((pos, neg))
}

/// Distance between the convex hulls of `p` and `q`, by enumerating vertex
/// subsets and solving for the closest points of their affine hulls.
pub fn hull_distance(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let d = p[0].len();
    let mut best = f64::INFINITY;
    for sm in 1..(1u32 << p.len()) {
        for tm in 1..(1u32 << q.len()) {
            let s: Vec<&Vec<f64>> = (0..p.len()).filter(|i| sm >> i & 1 == 1).map(|i| &p[i]).collect();
            let t: Vec<&Vec<f64>> = (0..q.len()).filter(|i| tm >> i & 1 == 1).map(|i| &q[i]).collect();
            let (ps, qt) = (s[s.len() - 1], t[t.len() - 1]);
            let (ns, nt) = (s.len() - 1, t.len() - 1);
            let rhs = DVector::from_iterator(d, (0..d).map(|k| qt[k] - ps[k]));
            let coef = if ns + nt == 0 {
                DVector::zeros(0)
            } else {
                let mut a = DMatrix::zeros(d, ns + nt);
                for (c, v) in s[..ns].iter().enumerate() {
                    for k in 0..d {
                        a[(k, c)] = v[k] - ps[k];
                    }
                }
                for (c, v) in t[..nt].iter().enumerate() {
                    for k in 0..d {
                        a[(k, ns + c)] = -(v[k] - qt[k]);
                    }
                }
                match a.svd(true, true).solve(&rhs, 1e-12) {
                    Ok(x) => x,
                    Err(_) => continue,
                }
            };
            let (wa, wb) = coef.as_slice().split_at(ns);
            let feasible =
                |w: &[f64]| w.iter().all(|&x| x >= -1e-12) && w.iter().sum::<f64>() <= 1.0 + 1e-12;
            if !feasible(wa) || !feasible(wb) {
                continue;
            }
            let diff: Vec<f64> = (0..d)
                .map(|k| {
                    let x = ps[k] + s[..ns].iter().zip(wa).map(|(v, w)| w * (v[k] - ps[k])).sum::<f64>();
                    let y = qt[k] + t[..nt].iter().zip(wb).map(|(v, w)| w * (v[k] - qt[k])).sum::<f64>();
                    x - y
                })
                .collect();
            best = best.min(dot(&diff, &diff).sqrt());
        }
    }
    best
}

pub fn random_landmarks(rng: &mut impl Rng, k: usize) -> LandmarkSet {
    LandmarkSet::new(
        (0..k)
            .map(|_| [rng.random_range(0.0..64.0), rng.random_range(0.0..64.0)])
            .collect(),
    )
    .unwrap()
}

pub fn direct_error(p: &LandmarkSet, q: &LandmarkSet, normalizer: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..p.len() {
        let a = p.points()[k];
        let b = q.points()[k];
        acc += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    }
    (acc / p.len() as f64).sqrt() / normalizer
}

/// Beard axis with mouth-opening and jaw components mixed in.
pub fn leaky_direction(cfg: &WorldConfig) -> SemanticDirection {
    let mut v = cfg.attribute_axis(0);
    let norm = dot(&v, &v).sqrt();
    let m = cfg.mixing();
    for (i, x) in v.iter_mut().enumerate() {
        *x = *x / norm + 0.15 * (m[(i, 2)] + m[(i, 6)]);
    }
    let meta = DirectionMeta {
        sample_count: 0,
        seed: 0,
        solver_iterations: 0,
    };
    SemanticDirection::new("beard", v, 0.0, 1.0, meta).unwrap()
}

/// Augmented ids whose error, recomputed from the generating latents, is
/// within `tau`.
pub fn brute_force_kept(
    augmented: &Manifest,
    backend: &SyntheticBackend,
    cfg: &WorldConfig,
    eyes: EyeStations,
    tau: f64,
) -> BTreeSet<String> {
    let truth = |code: &LatentCode| {
        let z = decode_latent(&code.to_backend_precision(), cfg).unwrap();
        landmarks_true(&z, cfg).to_backend_precision()
    };
    let mut out = BTreeSet::new();
    for s in augmented.augmented() {
        let parent = augmented.get(s.parent_id.as_deref().unwrap()).unwrap();
        let ImageRef::Inline(img) = &parent.image else {
            unreachable!("inline images only")
        };
        let p = backend.landmarks(std::slice::from_ref(img)).unwrap()[0]
            .clone()
            .unwrap();
        let q = truth(s.latent.as_ref().unwrap());
        let a = p.points()[eyes.left];
        let b = p.points()[eyes.right];
        let n = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        if direct_error(&p, &q, n) <= tau {
            out.insert(s.id.clone());
        }
    }
    out
}
