//! Semantic attribute directions: one linear SVM per attribute, fitted on
//! `(latent, ±1)` pairs, reduced to a unit hyperplane normal.

mod svm;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::numfmt::sig9;
use crate::model::LatentCode;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DirectionError {
    #[error("attribute {0}: need at least 2 samples of each class, got {1} positive and {2} negative")]
    TooFewPerClass(String, usize, usize),
    #[error("labels must be -1 or +1, found {0}")]
    BadLabel(i8),
    #[error("{latents} latents but {labels} labels")]
    LengthMismatch { latents: usize, labels: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("solver did not converge after {iterations} iterations (objective {objective}, KKT violation {violation:.3e})")]
    NotConverged {
        iterations: usize,
        objective: f64,
        violation: f64,
    },
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("degenerate direction: {0}")]
    Degenerate(String),
    #[error("direction {name}: normal has norm {norm}, expected 1")]
    NotUnit { name: String, norm: f64 },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Latent codes with binary attribute labels.
#[derive(Debug, Clone)]
pub struct LabeledLatentSet {
    attribute: String,
    latents: Vec<LatentCode>,
    labels: Vec<i8>,
}

impl LabeledLatentSet {
    pub fn new(
        attribute: impl Into<String>,
        latents: Vec<LatentCode>,
        labels: Vec<i8>,
    ) -> Result<Self, DirectionError> {
        let attribute = attribute.into();
        if latents.len() != labels.len() {
            return Err(DirectionError::LengthMismatch {
                latents: latents.len(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(DirectionError::BadLabel(bad));
        }
        let pos = labels.iter().filter(|&&y| y > 0).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(DirectionError::TooFewPerClass(attribute, pos, neg));
        }
        let dim = latents[0].dim();
        if let Some(w) = latents.iter().find(|w| w.dim() != dim) {
            return Err(DirectionError::Dimension {
                expected: dim,
                actual: w.dim(),
            });
        }
        Ok(Self {
            attribute,
            latents,
            labels,
        })
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn latents(&self) -> &[LatentCode] {
        &self.latents
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.latents[0].dim()
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y > 0).count();
        (pos, self.labels.len() - pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Hinge-loss weight `C`.
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Recorded in the direction metadata.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-9,
            max_iterations: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionMeta {
    pub sample_count: usize,
    pub seed: u64,
    pub solver_iterations: usize,
}

/// A unit hyperplane normal pointing toward the attribute-present class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticDirection {
    name: String,
    dim: usize,
    normal: Vec<f64>,
    bias: f64,
    train_accuracy: f64,
    meta: DirectionMeta,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl SemanticDirection {
    /// Builds a direction from any nonzero normal; the normal is rescaled to
    /// unit length and the bias divided by the same factor.
    pub fn new(
        name: impl Into<String>,
        normal: Vec<f64>,
        bias: f64,
        train_accuracy: f64,
        meta: DirectionMeta,
    ) -> Result<Self, DirectionError> {
        let name = name.into();
        let n = norm(&normal);
        if !n.is_finite() || n < 1e-12 || !bias.is_finite() {
            return Err(DirectionError::Degenerate(format!(
                "{name}: normal norm {n}, bias {bias}"
            )));
        }
        if !(0.0..=1.0).contains(&train_accuracy) {
            return Err(DirectionError::Config(format!(
                "train accuracy {train_accuracy} outside [0,1]"
            )));
        }
        let normal: Vec<f64> = normal.iter().map(|v| sig9(v / n)).collect();
        Ok(Self {
            name,
            dim: normal.len(),
            normal,
            bias: sig9(bias / n),
            train_accuracy: sig9(train_accuracy),
            meta,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn train_accuracy(&self) -> f64 {
        self.train_accuracy
    }

    pub fn meta(&self) -> &DirectionMeta {
        &self.meta
    }

    /// Signed distance of `w` from the hyperplane.
    pub fn decision(&self, w: &[f64]) -> f64 {
        dot(&self.normal, w) + self.bias
    }

    /// Same direction pointing the other way.
    pub fn negated(&self) -> Self {
        Self {
            normal: self.normal.iter().map(|v| -v).collect(),
            bias: -self.bias,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<(), DirectionError> {
        if self.normal.len() != self.dim {
            return Err(DirectionError::Dimension {
                expected: self.dim,
                actual: self.normal.len(),
            });
        }
        let n = norm(&self.normal);
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(DirectionError::NotUnit {
                name: self.name.clone(),
                norm: n,
            });
        }
        if !self.bias.is_finite() || !(0.0..=1.0).contains(&self.train_accuracy) {
            return Err(DirectionError::Degenerate(format!(
                "{}: bias {} accuracy {}",
                self.name, self.bias, self.train_accuracy
            )));
        }
        Ok(())
    }
}

/// Fits a soft-margin linear SVM and returns its unit normal.
pub fn fit_direction(
    data: &LabeledLatentSet,
    config: &SolverConfig,
) -> Result<SemanticDirection, DirectionError> {
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(DirectionError::Config(format!("C must be positive, got {}", config.c)));
    }
    if !(config.tolerance > 0.0) {
        return Err(DirectionError::Config(format!(
            "tolerance must be positive, got {}",
            config.tolerance
        )));
    }
    let (pos, neg) = data.class_counts();
    if pos < 2 || neg < 2 {
        return Err(DirectionError::TooFewPerClass(data.attribute.clone(), pos, neg));
    }
    let xs: Vec<&[f64]> = data.latents.iter().map(LatentCode::as_slice).collect();
    let ys: Vec<f64> = data.labels.iter().map(|&y| y as f64).collect();
    let sol = svm::solve(&xs, &ys, config.c, config.tolerance, config.max_iterations).map_err(
        |e| DirectionError::NotConverged {
            iterations: config.max_iterations,
            objective: e.objective,
            violation: e.violation,
        },
    )?;
    let correct = xs
        .iter()
        .zip(&ys)
        .filter(|(x, y)| (dot(&sol.weights, x) + sol.bias) * **y > 0.0)
        .count();
    let meta = DirectionMeta {
        sample_count: data.len(),
        seed: config.seed,
        solver_iterations: sol.iterations,
    };
    let dir = SemanticDirection::new(
        data.attribute.clone(),
        sol.weights,
        sol.bias,
        correct as f64 / data.len() as f64,
        meta,
    )?;
    let mut pos_mean = vec![0.0; data.dim()];
    for (x, _) in xs.iter().zip(&ys).filter(|(_, y)| **y > 0.0) {
        for (m, v) in pos_mean.iter_mut().zip(x.iter()) {
            *m += v / pos as f64;
        }
    }
    Ok(if dir.decision(&pos_mean) > 0.0 {
        dir
    } else {
        log::warn!("{}: positive-class mean on negative side, flipping", dir.name);
        dir.negated()
    })
}

/// Fits each attribute independently, in parallel.
pub fn fit_directions(
    sets: &[LabeledLatentSet],
    config: &SolverConfig,
) -> Vec<Result<SemanticDirection, DirectionError>> {
    crate::par::map(sets, |s| fit_direction(s, config))
}

/// Projects `target` off the span of `conditions` and renormalizes.
///
/// The hyperplane keeps passing through the point of the original hyperplane
/// nearest the origin, so the side each class falls on is preserved along
/// the surviving component.
pub fn orthogonalize(
    target: &SemanticDirection,
    conditions: &[SemanticDirection],
) -> Result<SemanticDirection, DirectionError> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(conditions.len());
    for c in conditions {
        if c.dim != target.dim {
            return Err(DirectionError::Dimension {
                expected: target.dim,
                actual: c.dim,
            });
        }
        let mut r = c.normal.clone();
        project_off(&mut r, &basis);
        let n = norm(&r);
        if n < 1e-8 {
            return Err(DirectionError::Degenerate(format!(
                "condition {} is linearly dependent on the others",
                c.name
            )));
        }
        r.iter_mut().for_each(|v| *v /= n);
        basis.push(r);
    }
    if basis.is_empty() {
        return Ok(target.clone());
    }
    let mut r = target.normal.clone();
    project_off(&mut r, &basis);
    let n = norm(&r);
    if n < 1e-8 {
        return Err(DirectionError::Degenerate(format!(
            "{} lies in the span of the conditions (residual {n:.3e})",
            target.name
        )));
    }
    let unit: Vec<f64> = r.iter().map(|v| v / n).collect();
    let bias = target.bias * dot(&unit, &target.normal);
    SemanticDirection::new(target.name.clone(), unit, bias, target.train_accuracy, target.meta)
}

fn project_off(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes keep the residual orthogonal to working precision
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
        }
    }
}

pub fn save_direction(dir: &SemanticDirection, path: &Path) -> Result<(), DirectionError> {
    let io = |e: std::io::Error| DirectionError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut text = serde_json::to_string_pretty(dir).expect("direction serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io)
}

pub fn load_direction(path: &Path) -> Result<SemanticDirection, DirectionError> {
    let text = std::fs::read_to_string(path).map_err(|e| DirectionError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_direction(&text).map_err(|e| match e {
        DirectionError::Parse { message, .. } => DirectionError::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

pub fn parse_direction(text: &str) -> Result<SemanticDirection, DirectionError> {
    let dir: SemanticDirection = serde_json::from_str(text).map_err(|e| DirectionError::Parse {
        path: "<direction>".into(),
        message: e.to_string(),
    })?;
    dir.validate()?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[(&[f64], i8)]) -> LabeledLatentSet {
        LabeledLatentSet::new(
            "a",
            points
                .iter()
                .map(|(x, _)| LatentCode::new(x.to_vec()).unwrap())
                .collect(),
            points.iter().map(|(_, y)| *y).collect(),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_separable() {
        let d = fit_direction(
            &set(&[
                (&[1.0, 0.0], 1),
                (&[2.0, 0.0], 1),
                (&[-1.0, 0.0], -1),
                (&[-2.0, 0.0], -1),
            ]),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((d.normal()[0] - 1.0).abs() < 1e-9);
        assert!(d.normal()[1].abs() < 1e-9);
        assert!(d.bias().abs() < 1e-9);
        assert_eq!(d.train_accuracy(), 1.0);
    }

    #[test]
    fn vertical_axis() {
        let d = fit_direction(
            &set(&[
                (&[0.0, 1.0], 1),
                (&[0.0, 2.0], 1),
                (&[0.0, -1.0], -1),
                (&[0.0, -2.0], -1),
            ]),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(d.normal()[0].abs() < 1e-9 && (d.normal()[1] - 1.0).abs() < 1e-9);
        assert!(d.bias().abs() < 1e-9);
    }

    #[test]
    fn rejects_single_class_and_small_classes() {
        let err = LabeledLatentSet::new(
            "a",
            vec![LatentCode::zeros(2), LatentCode::zeros(2)],
            vec![1, 1],
        )
        .unwrap_err();
        assert!(matches!(err, DirectionError::TooFewPerClass(_, 2, 0)));
        let one_neg = set(&[(&[1.0], 1), (&[2.0], 1), (&[-1.0], -1)]);
        assert!(matches!(
            fit_direction(&one_neg, &SolverConfig::default()),
            Err(DirectionError::TooFewPerClass(_, 2, 1))
        ));
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let err = LabeledLatentSet::new(
            "a",
            vec![LatentCode::zeros(2), LatentCode::zeros(3)],
            vec![1, -1],
        )
        .unwrap_err();
        assert_eq!(err, DirectionError::Dimension { expected: 2, actual: 3 });
    }

    #[test]
    fn orthogonalize_axis() {
        let meta = DirectionMeta {
            sample_count: 0,
            seed: 0,
            solver_iterations: 0,
        };
        let t = SemanticDirection::new("t", vec![1.0, 1.0], 0.0, 1.0, meta).unwrap();
        let c = SemanticDirection::new("c", vec![0.0, 1.0], 0.0, 1.0, meta).unwrap();
        let o = orthogonalize(&t, std::slice::from_ref(&c)).unwrap();
        assert!((o.normal()[0] - 1.0).abs() < 1e-12 && o.normal()[1].abs() < 1e-12);
        assert_eq!(orthogonalize(&t, &[]).unwrap(), t);
        assert!(matches!(
            orthogonalize(&c, &[t.clone(), c.clone()]),
            Err(DirectionError::Degenerate(_))
        ));
    }

    #[test]
    fn parse_names_missing_field() {
        let text = r#"{"name":"a","dim":1,"normal":[1.0],"train_accuracy":1.0,
            "meta":{"sample_count":1,"seed":0,"solver_iterations":0}}"#;
        let err = parse_direction(text).unwrap_err();
        assert!(err.to_string().contains("bias"), "{err}");
    }
}
