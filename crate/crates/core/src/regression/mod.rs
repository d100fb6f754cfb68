//! Blendshape regressor: a small convolutional network trained with
//! smooth-L1 loss and Adam, plus per-category L1 evaluation.

pub mod net;
pub mod report;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::sha256_hex;
use crate::imageio::{ImageIoError, ImageStore};
use crate::model::{BlendshapeVector, DatasetSample, ImageGrid, Manifest, ManifestError};
use crate::rng::stream;

pub use net::{Architecture, Scalar};
pub use report::{parse_report, render_report, Cell, EvalReport, ReportRow, ALL};

/// Samples per gradient work item. Fixed so that batch gradients are summed
/// in the same order whether or not chunks run in parallel.
pub const GRAD_CHUNK: usize = 32;
const PREDICT_CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("invalid regressor config: {0}")]
    Config(String),
    #[error("training manifest is empty")]
    Empty,
    #[error("sample {id}: {message}")]
    Sample { id: String, message: String },
    #[error("image is {got_h}x{got_w}, model expects {want_h}x{want_w}")]
    ImageSize {
        want_h: usize,
        want_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite residual {0}")]
    NonFinite(f64),
    #[error("smooth-L1 breakpoint must be positive, got {0}")]
    BadBeta(f64),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// `0.5·x²/β` for `|x| < β`, `|x| − 0.5·β` otherwise.
pub fn smooth_l1(x: f64, beta: f64) -> Result<f64, RegressionError> {
    if !x.is_finite() {
        return Err(RegressionError::NonFinite(x));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(RegressionError::BadBeta(beta));
    }
    Ok(net::smooth_l1(x, beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    /// Output channels of each stride-2 3×3 convolution block.
    pub conv_widths: Vec<usize>,
    /// Fully connected widths; the last equals the blendshape count.
    pub fc_widths: Vec<usize>,
    pub input_height: usize,
    pub input_width: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub smooth_l1_beta: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            conv_widths: vec![16, 32, 64],
            fc_widths: vec![128, 8],
            input_height: 64,
            input_width: 64,
            seed: 0,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 64,
            epochs: 20,
            smooth_l1_beta: 1.0,
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<(), RegressionError> {
        let bad = |m: &str| Err(RegressionError::Config(m.to_owned()));
        if self.fc_widths.is_empty() {
            return bad("fc_widths must name at least the output layer");
        }
        if self.conv_widths.iter().chain(&self.fc_widths).any(|&w| w == 0) {
            return bad("all layer widths must be at least 1");
        }
        if self.input_height == 0 || self.input_width == 0 {
            return bad("input size must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.learning_rate) || !positive(self.adam_eps) {
            return bad("learning_rate and adam_eps must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !positive(self.smooth_l1_beta) {
            return bad("smooth_l1_beta must be positive");
        }
        Ok(())
    }

    pub fn outputs(&self) -> usize {
        *self.fc_widths.last().unwrap_or(&0)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::new(
            self.input_height,
            self.input_width,
            &self.conv_widths,
            &self.fc_widths,
        )
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Trained network with single-precision parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    cfg: RegressorConfig,
    arch: Architecture,
    params: Vec<f32>,
}

/// Pixels are centred on zero before entering the network.
fn push_input(img: &ImageGrid, out: &mut Vec<f32>) {
    out.extend(img.pixels().iter().map(|p| p - 0.5));
}

fn push_rgb8(bytes: &[u8], out: &mut Vec<f32>) {
    out.extend(bytes.iter().map(|&b| b as f32 / 255.0 - 0.5));
}

impl Regressor {
    pub fn new(cfg: RegressorConfig) -> Result<Self, RegressionError> {
        cfg.validate()?;
        let arch = cfg.architecture();
        let params = arch.init(cfg.seed);
        Ok(Self { cfg, arch, params })
    }

    pub fn config(&self) -> &RegressorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    fn check_size(&self, img: &ImageGrid) -> Result<(), RegressionError> {
        if img.height() != self.cfg.input_height || img.width() != self.cfg.input_width {
            return Err(RegressionError::ImageSize {
                want_h: self.cfg.input_height,
                want_w: self.cfg.input_width,
                got_h: img.height(),
                got_w: img.width(),
            });
        }
        Ok(())
    }

    /// Activations clamped to `[0, 1]`.
    pub fn predict(&self, image: &ImageGrid) -> Result<BlendshapeVector, RegressionError> {
        Ok(self.predict_batch(std::slice::from_ref(image))?.remove(0))
    }

    pub fn predict_batch(
        &self,
        images: &[ImageGrid],
    ) -> Result<Vec<BlendshapeVector>, RegressionError> {
        for img in images {
            self.check_size(img)?;
        }
        let chunks: Vec<&[ImageGrid]> = images.chunks(PREDICT_CHUNK).collect();
        let outs = crate::par::map(&chunks, |chunk| {
            let mut x = Vec::with_capacity(chunk.len() * self.arch.input_len());
            for img in *chunk {
                push_input(img, &mut x);
            }
            net::forward(&self.arch, &self.params, &x, chunk.len())
        });
        let b = self.arch.outputs();
        Ok(outs
            .iter()
            .flat_map(|o| o.chunks_exact(b))
            .map(|row| BlendshapeVector::clamped(row.iter().map(|&v| v as f64).collect()))
            .collect())
    }
}

/// Training images held as 8-bit RGB, with labels.
pub struct TrainingSet {
    pub height: usize,
    pub width: usize,
    pixels: Vec<Vec<u8>>,
    labels: Vec<Vec<f32>>,
}

impl TrainingSet {
    pub fn from_manifest(manifest: &Manifest, images: &ImageStore) -> Result<Self, RegressionError> {
        let samples: Vec<&DatasetSample> = manifest.samples().iter().collect();
        let first = samples.first().ok_or(RegressionError::Empty)?;
        let first = images.load(&first.image)?;
        let (height, width) = (first.height(), first.width());
        let b = manifest.samples()[0].label.len();
        let loaded = crate::par::map(&samples, |s| -> Result<(Vec<u8>, Vec<f32>), RegressionError> {
            let img = images.load(&s.image)?;
            if img.height() != height || img.width() != width {
                return Err(RegressionError::Sample {
                    id: s.id.clone(),
                    message: format!(
                        "image is {}x{}, expected {height}x{width}",
                        img.height(),
                        img.width()
                    ),
                });
            }
            if s.label.len() != b {
                return Err(RegressionError::Sample {
                    id: s.id.clone(),
                    message: format!("label has {} entries, expected {b}", s.label.len()),
                });
            }
            Ok((
                img.to_rgb8(),
                s.label.as_slice().iter().map(|&v| v as f32).collect(),
            ))
        });
        let mut pixels = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        for r in loaded {
            let (p, l) = r?;
            pixels.push(p);
            labels.push(l);
        }
        Ok(Self {
            height,
            width,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean per-sample loss of each epoch, measured during the epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Default)]
struct Worker {
    ws: net::Workspace<f32>,
    x: Vec<f32>,
    y: Vec<f32>,
}

/// Trains from scratch. Deterministic given `cfg.seed`: initial weights and
/// every epoch's shuffle come from seeded streams.
pub fn train(
    data: &TrainingSet,
    cfg: &RegressorConfig,
) -> Result<(Regressor, TrainingLog), RegressionError> {
    let mut model = Regressor::new(cfg.clone())?;
    if data.is_empty() {
        return Err(RegressionError::Empty);
    }
    if data.height != cfg.input_height || data.width != cfg.input_width {
        return Err(RegressionError::ImageSize {
            want_h: cfg.input_height,
            want_w: cfg.input_width,
            got_h: data.height,
            got_w: data.width,
        });
    }
    if data.outputs() != cfg.outputs() {
        return Err(RegressionError::Config(format!(
            "final fc width {} differs from the label length {}",
            cfg.outputs(),
            data.outputs()
        )));
    }
    let arch = model.arch.clone();
    let b = arch.outputs();
    let mut adam = net::Adam::<f32>::new(
        arch.param_count,
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );
    let beta = cfg.smooth_l1_beta as f32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let pool = std::sync::Mutex::new(Vec::<Worker>::new());
    let mut grad = vec![0.0f32; arch.param_count];
    let mut log = TrainingLog {
        epoch_losses: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, "regression/shuffle", epoch as u64));
        let mut epoch_loss = 0.0f64;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / (batch.len() * b) as f32;
            let chunks: Vec<&[usize]> = batch.chunks(GRAD_CHUNK).collect();
            let params = &model.params;
            let workers = crate::par::map(&chunks, |idx| {
                let mut w = pool.lock().expect("pool lock").pop().unwrap_or_default();
                w.x.clear();
                w.y.clear();
                for &i in *idx {
                    push_rgb8(&data.pixels[i], &mut w.x);
                    w.y.extend_from_slice(&data.labels[i]);
                }
                w.ws.loss_and_grad(&arch, params, &w.x, &w.y, idx.len(), beta, scale);
                w
            });
            let mut loss = 0.0f32;
            grad.fill(0.0);
            for w in workers {
                loss += w.ws.loss();
                for (a, v) in grad.iter_mut().zip(w.ws.grad()) {
                    *a += *v;
                }
                pool.lock().expect("pool lock").push(w);
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(RegressionError::NonFiniteLoss { epoch, batch: bi });
            }
            adam.update(&mut model.params, &grad);
            epoch_loss += loss as f64 * batch.len() as f64;
        }
        let mean = epoch_loss / data.len() as f64;
        log::info!("epoch {}/{}: loss {mean:.6}", epoch + 1, cfg.epochs);
        log.epoch_losses.push(mean);
    }
    Ok((model, log))
}

/// Per-sample error: mean absolute error over the blendshape dimensions.
pub fn sample_error(pred: &BlendshapeVector, label: &BlendshapeVector) -> f64 {
    let n = label.len().max(1) as f64;
    pred.as_slice()
        .iter()
        .zip(label.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n
}

/// One report row named `source`: mean/min/max per category and over all
/// samples. Categories are sorted, with `All` last.
pub fn evaluate(
    model: &Regressor,
    test: &Manifest,
    images: &ImageStore,
    source: &str,
) -> Result<EvalReport, RegressionError> {
    let samples = test.samples();
    let loaded = crate::par::map(samples, |s| images.load(&s.image))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let preds = model.predict_batch(&loaded)?;
    let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::with_capacity(samples.len());
    for (s, p) in samples.iter().zip(&preds) {
        if s.label.len() != p.len() {
            return Err(RegressionError::Sample {
                id: s.id.clone(),
                message: format!("label has {} entries, model predicts {}", s.label.len(), p.len()),
            });
        }
        if s.category.is_empty() || s.category == ALL {
            return Err(RegressionError::Sample {
                id: s.id.clone(),
                message: format!("category must be non-empty and not {ALL:?}"),
            });
        }
        let e = sample_error(p, &s.label);
        by_cat.entry(s.category.clone()).or_default().push(e);
        all.push(e);
    }
    let mut categories: Vec<String> = by_cat.keys().cloned().collect();
    categories.push(ALL.to_owned());
    let mut counts = BTreeMap::new();
    let mut cells = BTreeMap::new();
    for (c, errs) in by_cat.iter().chain(std::iter::once((&ALL.to_owned(), &all))) {
        counts.insert(c.clone(), errs.len());
        match Cell::from_errors(errs) {
            Some(cell) => {
                cells.insert(c.clone(), cell);
            }
            None => log::warn!("category {c} is empty; cell omitted"),
        }
    }
    Ok(EvalReport {
        categories,
        counts,
        rows: vec![ReportRow {
            source: source.to_owned(),
            cells,
        }],
    })
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"LARG";
const CHECKPOINT_VERSION: u8 = 1;

/// Checkpoint sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub manifest_hash: String,
    pub epochs: usize,
    pub final_loss: f64,
    pub checkpoint_sha256: String,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Magic, version, u32 config length, config JSON, u64 parameter count,
/// then little-endian f32 parameters.
pub fn checkpoint_bytes(model: &Regressor) -> Vec<u8> {
    let cfg = serde_json::to_vec(&model.cfg).expect("config serializes");
    let mut out = Vec::with_capacity(17 + cfg.len() + 4 * model.params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn save_checkpoint(
    model: &Regressor,
    log: &TrainingLog,
    manifest_hash: &str,
    path: &Path,
) -> Result<CheckpointMeta, RegressionError> {
    let err = |e: std::io::Error| RegressionError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let bytes = checkpoint_bytes(model);
    let meta = CheckpointMeta {
        config_hash: model.cfg.content_hash(),
        manifest_hash: manifest_hash.to_owned(),
        epochs: log.epoch_losses.len(),
        final_loss: crate::model::numfmt::sig9(log.final_loss()),
        checkpoint_sha256: sha256_hex(&bytes),
    };
    std::fs::File::create(path).and_then(|mut f| f.write_all(&bytes)).map_err(err)?;
    let mut side = serde_json::to_string_pretty(&meta).expect("meta serializes");
    side.push('\n');
    std::fs::write(sidecar_path(path), side).map_err(err)?;
    Ok(meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(Regressor, CheckpointMeta), RegressionError> {
    let fail = |m: String| RegressionError::Checkpoint {
        path: path.display().to_string(),
        message: m,
    };
    let bytes = std::fs::read(path).map_err(|e| fail(e.to_string()))?;
    let side = std::fs::read_to_string(sidecar_path(path)).map_err(|e| fail(format!("sidecar: {e}")))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&side).map_err(|e| fail(format!("sidecar: {e}")))?;
    if sha256_hex(&bytes) != meta.checkpoint_sha256 {
        return Err(fail("checksum does not match sidecar".into()));
    }
    let model = parse_checkpoint(&bytes).map_err(fail)?;
    if model.cfg.content_hash() != meta.config_hash {
        return Err(fail("config hash does not match sidecar".into()));
    }
    Ok((model, meta))
}

fn parse_checkpoint(bytes: &[u8]) -> Result<Regressor, String> {
    let take = |at: &mut usize, n: usize| -> Result<&[u8], String> {
        let s = bytes.get(*at..*at + n).ok_or("truncated checkpoint")?;
        *at += n;
        Ok(s)
    };
    let mut at = 0;
    if take(&mut at, 4)? != CHECKPOINT_MAGIC {
        return Err("bad magic".into());
    }
    let version = take(&mut at, 1)?[0];
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let len = u32::from_le_bytes(take(&mut at, 4)?.try_into().expect("4 bytes")) as usize;
    let cfg: RegressorConfig =
        serde_json::from_slice(take(&mut at, len)?).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    let count = u64::from_le_bytes(take(&mut at, 8)?.try_into().expect("8 bytes")) as usize;
    let arch = cfg.architecture();
    if count != arch.param_count {
        return Err(format!(
            "{count} parameters stored, architecture needs {}",
            arch.param_count
        ));
    }
    let raw = take(&mut at, 4 * count)?;
    if at != bytes.len() {
        return Err("trailing bytes".into());
    }
    let params = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Regressor { cfg, arch, params })
}
