//! The end-to-end workflow as a set of stages over one output directory.
//!
//! Each stage reads the artifacts of earlier stages from disk and writes its
//! own, so stages can run one at a time from the command line or all at once
//! through [`Pipeline::bench`].

mod config;
mod summary;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use thiserror::Error;

pub use config::{
    BackendSpec, DatasetSpec, FilterSpec, Overrides, PipelineConfig, SvmSpec, DEFAULT_SEED,
};
pub use summary::{read_run_summary, FileRecord, RunSummary, RUN_SUMMARY};

use crate::adapters::{
    AdapterError, BackendDescriptor, Backends, ExchangeBackend, SyntheticBackend,
};
use crate::augment::{augment_dataset, AugmentError};
use crate::directions::{
    fit_directions, load_direction, save_direction, DirectionError, LabeledLatentSet,
};
use crate::imageio::{save_sheet, ImageIoError, ImageStore};
use crate::model::{
    read_manifest, write_manifest, DatasetSample, Manifest, ManifestError, ModelError,
};
use crate::quality::{filter_augmented, quality_grid, write_quality_report, EyeStations, QualityError};
use crate::regression::{
    evaluate, load_checkpoint, render_report, save_checkpoint, train, EvalReport, RegressionError,
    TrainingSet,
};
use crate::rng::stream;
use crate::world::{
    blendshape_label, sample_latent, FactoredLatent, LandmarkLayout, WorldConfig, WorldError,
};

/// Images per encoder request during world generation.
const ENCODE_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {0}; run the stage that produces it first")]
    MissingArtifact(String),
    #[error("{path} was produced under a different world config; rerun gen-world")]
    StaleArtifact { path: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;
pub const EXIT_INVARIANT: u8 = 4;

fn manifest_code(e: &ManifestError) -> u8 {
    match e {
        ManifestError::Io { .. } => EXIT_FAILURE,
        _ => EXIT_INVARIANT,
    }
}

fn image_code(e: &ImageIoError) -> u8 {
    match e {
        ImageIoError::Model(_) => EXIT_INVARIANT,
        _ => EXIT_FAILURE,
    }
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        use PipelineError as P;
        match self {
            P::Config(_) | P::MissingArtifact(_) | P::StaleArtifact { .. } => EXIT_CONFIG,
            P::Io { .. } => EXIT_FAILURE,
            P::World(WorldError::Config(_)) => EXIT_CONFIG,
            P::World(_) => EXIT_INVARIANT,
            P::Adapter(_) => EXIT_BACKEND,
            P::Direction(e) => match e {
                DirectionError::Config(_) => EXIT_CONFIG,
                DirectionError::NotConverged { .. }
                | DirectionError::Io { .. }
                | DirectionError::Parse { .. } => EXIT_FAILURE,
                _ => EXIT_INVARIANT,
            },
            P::Augment(e) => match e {
                AugmentError::Spec(_) => EXIT_CONFIG,
                AugmentError::Backend(_) | AugmentError::NoSuccesses { .. } => EXIT_BACKEND,
                AugmentError::Manifest(m) => manifest_code(m),
                AugmentError::Image(i) => image_code(i),
                _ => EXIT_INVARIANT,
            },
            P::Quality(e) => match e {
                QualityError::BadThreshold(_) => EXIT_CONFIG,
                QualityError::Manifest(m) => manifest_code(m),
                QualityError::Image(i) => image_code(i),
                QualityError::Io { .. } => EXIT_FAILURE,
                _ => EXIT_INVARIANT,
            },
            P::Regression(e) => match e {
                RegressionError::Config(_) | RegressionError::BadBeta(_) => EXIT_CONFIG,
                RegressionError::Checkpoint { .. } | RegressionError::Report(_) => EXIT_FAILURE,
                RegressionError::Manifest(m) => manifest_code(m),
                RegressionError::Image(i) => image_code(i),
                _ => EXIT_INVARIANT,
            },
            P::Manifest(m) => manifest_code(m),
            P::Image(i) => image_code(i),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Which dataset a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Baseline,
    Augmented,
    Filtered,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Baseline, Source::Augmented, Source::Filtered];

    pub fn name(self) -> &'static str {
        match self {
            Source::Baseline => "baseline",
            Source::Augmented => "augmented",
            Source::Filtered => "filtered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Report row label.
    pub fn row(self, attribute: &str) -> String {
        match self {
            Source::Baseline => "Baseline".into(),
            Source::Augmented => format!("W/ {attribute}"),
            Source::Filtered => format!("W/ {attribute} (filtered)"),
        }
    }
}

/// Artifact paths under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn at(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn config(&self) -> PathBuf {
        self.at("config.toml")
    }
    pub fn world_dir(&self) -> PathBuf {
        self.at("world")
    }
    pub fn world_toml(&self) -> PathBuf {
        self.at("world/world.toml")
    }
    /// Shared record of every face the synthetic world has drawn.
    pub fn registry(&self) -> PathBuf {
        self.at("world/registry.jsonl")
    }
    pub fn split(&self, name: &str) -> PathBuf {
        self.at(&format!("world/{name}.jsonl"))
    }
    pub fn directions_dir(&self) -> PathBuf {
        self.at("directions")
    }
    pub fn direction(&self, attribute: &str) -> PathBuf {
        self.at(&format!("directions/{attribute}.json"))
    }
    pub fn augment_dir(&self) -> PathBuf {
        self.at("augment")
    }
    pub fn augmented(&self) -> PathBuf {
        self.at("augment/augmented.jsonl")
    }
    pub fn filter_dir(&self) -> PathBuf {
        self.at("filter")
    }
    pub fn filtered(&self) -> PathBuf {
        self.at("filter/filtered.jsonl")
    }
    pub fn quality_report(&self) -> PathBuf {
        self.at("filter/quality.jsonl")
    }
    pub fn quality_grid(&self) -> PathBuf {
        self.at("filter/grid.png")
    }
    pub fn mix_dir(&self) -> PathBuf {
        self.at("mix")
    }
    pub fn mixed(&self) -> PathBuf {
        self.at("mix/train.jsonl")
    }
    pub fn checkpoint(&self, s: Source) -> PathBuf {
        self.at(&format!("models/{}.ckpt", s.name()))
    }
    pub fn training_log(&self, s: Source) -> PathBuf {
        self.at(&format!("models/{}.log.json", s.name()))
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.at("eval")
    }
    pub fn eval_report(&self) -> PathBuf {
        self.at("eval/report.json")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.at("report")
    }
    pub fn report_table(&self) -> PathBuf {
        self.at("report/table.txt")
    }
    pub fn summary(&self) -> PathBuf {
        self.at(RUN_SUMMARY)
    }

    /// Training manifest for `s`.
    pub fn training_manifest(&self, s: Source) -> PathBuf {
        match s {
            Source::Baseline => self.split("train"),
            Source::Augmented => self.augmented(),
            Source::Filtered => self.mixed(),
        }
    }
}

/// Where generator, encoder and landmark requests go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Synthetic,
    /// A file-exchange directory served by an external process.
    Exchange(PathBuf),
}

impl BackendChoice {
    /// Parses `synthetic` or `exchange:PATH`.
    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        if s == "synthetic" {
            return Ok(Self::Synthetic);
        }
        match s.strip_prefix("exchange:") {
            Some(p) if !p.is_empty() => Ok(Self::Exchange(PathBuf::from(p))),
            _ => Err(PipelineError::Config(format!(
                "backend must be synthetic or exchange:PATH, got {s:?}"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Synthetic => "synthetic".into(),
            Self::Exchange(p) => format!("exchange:{}", p.display()),
        }
    }
}

/// Expression category of a face: `eyes` or `mouth` when that region holds
/// over 60% of the expression energy, `mixed` otherwise.
pub fn expression_category(expr: &[f64]) -> &'static str {
    const EYE_DIMS: [usize; 4] = [0, 1, 4, 5];
    const MOUTH_DIMS: [usize; 4] = [2, 3, 6, 7];
    let energy = |dims: &[usize]| -> f64 {
        dims.iter()
            .filter_map(|&i| expr.get(i))
            .map(|v| v * v)
            .sum()
    };
    let (eye, mouth) = (energy(&EYE_DIMS), energy(&MOUTH_DIMS));
    let total = eye + mouth;
    if total <= 0.0 {
        "mixed"
    } else if eye / total > 0.6 {
        "eyes"
    } else if mouth / total > 0.6 {
        "mouth"
    } else {
        "mixed"
    }
}

/// Names of the generated splits.
pub const SPLITS: [&str; 3] = ["train", "test", "pool"];

/// A resolved configuration bound to an output directory and a backend.
pub struct Pipeline {
    cfg: PipelineConfig,
    world: WorldConfig,
    layout: Layout,
    backend: BackendChoice,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, backend: BackendChoice) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let world = cfg.world_config()?;
        let layout = Layout::new(&cfg.output_dir);
        Ok(Self {
            cfg,
            world,
            layout,
            backend,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn images(&self) -> ImageStore {
        ImageStore::at(self.layout.root(), "")
    }

    fn synthetic(&self) -> Result<Arc<SyntheticBackend>, PipelineError> {
        Ok(Arc::new(SyntheticBackend::with_store(
            self.world.clone(),
            self.layout.registry(),
        )?))
    }

    fn backends(&self) -> Result<Backends, PipelineError> {
        match &self.backend {
            BackendChoice::Synthetic => Ok(Backends::synthetic(self.synthetic()?)),
            BackendChoice::Exchange(dir) => {
                let mut desc = BackendDescriptor::new(
                    dir,
                    self.world.dim(),
                    self.world.image_size(),
                    self.world.landmark_count(),
                );
                desc.timeout = Duration::from_secs_f64(self.cfg.backend.timeout_secs);
                Ok(Backends::exchange(Arc::new(ExchangeBackend::new(desc)?)))
            }
        }
    }

    /// Reads a manifest an earlier stage wrote and checks it belongs to this
    /// world.
    fn load(&self, path: &Path) -> Result<Manifest, PipelineError> {
        if !path.exists() {
            return Err(PipelineError::MissingArtifact(path.display().to_string()));
        }
        let m = read_manifest(path)?;
        if m.world_config_hash() != self.world.content_hash() {
            return Err(PipelineError::StaleArtifact {
                path: path.display().to_string(),
            });
        }
        Ok(m)
    }

    /// Clears `outputs`, runs `f`, and clears them again if it fails.
    fn stage<T>(
        &self,
        outputs: &[PathBuf],
        f: impl FnOnce() -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        remove_all(outputs)?;
        let r = f();
        if r.is_err() {
            let _ = remove_all(outputs);
        }
        r
    }

    fn write_config(&self) -> Result<(), PipelineError> {
        let path = self.layout.config();
        create_parent(&path)?;
        std::fs::write(&path, self.cfg.to_toml()).map_err(|e| io_err(&path, e))
    }

    /// Records every file under the output directory with its hash.
    pub fn write_summary(&self, command: &str) -> Result<RunSummary, PipelineError> {
        let s = RunSummary::collect(
            self.layout.root(),
            command,
            &self.cfg,
            &self.backend.describe(),
        )?;
        s.write(&self.layout.summary())?;
        Ok(s)
    }

    /// Renders and encodes the train, test and direction-pool splits.
    pub fn gen_world(&self) -> Result<(), PipelineError> {
        self.write_config()?;
        self.stage(&[self.layout.world_dir()], || {
            let path = self.layout.world_toml();
            create_parent(&path)?;
            std::fs::write(&path, self.world.to_toml()).map_err(|e| io_err(&path, e))?;
            let synth = self.synthetic()?;
            let backends = match self.backend {
                BackendChoice::Synthetic => Backends::synthetic(synth.clone()),
                BackendChoice::Exchange(_) => self.backends()?,
            };
            let d = &self.cfg.dataset;
            for (split, n) in SPLITS.iter().zip([d.n_train, d.n_test, d.pool_size]) {
                let m = self.gen_split(split, n, &synth, &backends)?;
                write_manifest(&m, &self.layout.split(split))?;
                log::info!("{split}: {} faces", m.len());
            }
            Ok(())
        })
    }

    fn gen_split(
        &self,
        split: &str,
        n: usize,
        synth: &SyntheticBackend,
        backends: &Backends,
    ) -> Result<Manifest, PipelineError> {
        let d = &self.cfg.dataset;
        let attr = self
            .world
            .attribute_index(&d.attribute)
            .expect("attribute validated");
        let sign = match split {
            "train" => Some(-1.0),
            "test" => Some(1.0),
            _ => None,
        };
        let zs: Vec<FactoredLatent> = (0..n as u64)
            .map(|i| {
                let mut z = sample_latent(
                    &mut stream(self.cfg.seed, &format!("world/{split}"), i),
                    &self.world,
                );
                if let Some(s) = sign {
                    z.attr[attr] = s * z.attr[attr].abs().max(1e-6);
                }
                z
            })
            .collect();
        let store = ImageStore::at(self.layout.root(), format!("world/images/{split}"));
        let mut m = Manifest::new(self.world.content_hash(), self.cfg.seed);
        for (c, zc) in zs.chunks(ENCODE_CHUNK).enumerate() {
            let images = synth.render_faces(zc)?;
            let codes = backends.encoder.encode(&images)?;
            let base = c * ENCODE_CHUNK;
            let ids: Vec<String> = (base..base + zc.len())
                .map(|i| format!("{split}{i:05}"))
                .collect();
            let refs = crate::par::map_range(zc.len(), |k| store.store(&ids[k], &images[k]))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            for (k, ((z, image), code)) in zc.iter().zip(refs).zip(codes).enumerate() {
                let i = base + k;
                let mut s = DatasetSample::original(
                    ids[k].clone(),
                    image,
                    blendshape_label(z),
                    expression_category(&z.expr),
                );
                s.latent = Some(code);
                let mut flips = stream(self.cfg.seed, &format!("world/{split}/labels"), i as u64);
                for (a, name) in self.world.attribute_names().iter().enumerate() {
                    let mut y: i8 = if z.attr[a] > 0.0 { 1 } else { -1 };
                    if sign.is_none() && flips.random::<f64>() < d.label_flip_rate {
                        y = -y;
                    }
                    s.attributes.insert((*name).to_owned(), y);
                }
                m.push(s)?;
            }
        }
        Ok(m)
    }

    /// Fits one direction per attribute on the labelled pool.
    pub fn fit_directions(&self) -> Result<(), PipelineError> {
        self.write_config()?;
        self.stage(&[self.layout.directions_dir()], || {
            let pool = self.load(&self.layout.split("pool"))?;
            let codes = pool
                .samples()
                .iter()
                .map(|s| {
                    s.latent.clone().ok_or_else(|| {
                        PipelineError::Config(format!("pool sample {} has no latent code", s.id))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let sets = self
                .world
                .attribute_names()
                .iter()
                .map(|name| {
                    let labels = pool
                        .samples()
                        .iter()
                        .map(|s| s.attributes.get(*name).copied().unwrap_or(0))
                        .collect();
                    LabeledLatentSet::new(*name, codes.clone(), labels)
                })
                .collect::<Result<Vec<_>, _>>()?;
            for r in fit_directions(&sets, &self.cfg.solver()) {
                let dir = r?;
                log::info!(
                    "{}: train accuracy {:.3}, {} solver iterations",
                    dir.name(),
                    dir.train_accuracy(),
                    dir.meta().solver_iterations
                );
                let path = self.layout.direction(dir.name());
                create_parent(&path)?;
                save_direction(&dir, &path)?;
            }
            Ok(())
        })
    }

    /// Edits every training face along the configured attribute direction.
    pub fn augment(&self) -> Result<(), PipelineError> {
        self.write_config()?;
        self.stage(&[self.layout.augment_dir()], || {
            let train = self.load(&self.layout.split("train"))?;
            let dpath = self.layout.direction(&self.cfg.dataset.attribute);
            if !dpath.exists() {
                return Err(PipelineError::MissingArtifact(dpath.display().to_string()));
            }
            let dir = load_direction(&dpath)?;
            let store = ImageStore::at(self.layout.root(), "augment/images");
            let out = augment_dataset(&train, &dir, &self.cfg.edit, &self.backends()?, &store)?;
            if !out.skipped.is_empty() {
                log::warn!("{} edits skipped", out.skipped.len());
            }
            log::info!("{} augmented samples", out.manifest.augmented().count());
            write_manifest(&out.manifest, &self.layout.augmented())?;
            Ok(())
        })
    }

    /// Scores augmented samples against their parents and keeps those within
    /// the threshold.
    pub fn filter(&self) -> Result<(), PipelineError> {
        self.write_config()?;
        self.stage(&[self.layout.filter_dir()], || {
            let aug = self.load(&self.layout.augmented())?;
            let backends = self.backends()?;
            let eyes = EyeStations::from(&LandmarkLayout::for_count(self.world.landmark_count()));
            let images = self.images();
            let out = filter_augmented(
                &aug,
                self.cfg.filter.tau,
                backends.landmarker.as_ref(),
                &images,
                eyes,
            )?;
            let kept = out.results.iter().filter(|r| r.accepted).count();
            log::info!(
                "kept {kept} of {} augmented samples at tau {}",
                out.results.len(),
                self.cfg.filter.tau
            );
            write_manifest(&out.filtered, &self.layout.filtered())?;
            write_quality_report(&out.results, &self.layout.quality_report())?;
            if let Some(grid) = quality_grid(&out, &images, self.cfg.filter.grid_per_group)? {
                save_sheet(&grid, &self.layout.quality_grid())?;
            }
            Ok(())
        })
    }

    /// Training originals plus the augmented samples the filter kept.
    pub fn mix(&self) -> Result<(), PipelineError> {
        self.write_config()?;
        self.stage(&[self.layout.mix_dir()], || {
            let train = self.load(&self.layout.split("train"))?;
            let filtered = self.load(&self.layout.filtered())?;
            let mut out = train.empty_like();
            for s in train.originals() {
                out.push(s.clone())?;
            }
            for s in filtered.augmented() {
                let parent = s.parent_id.as_deref().unwrap_or_default();
                if train.get(parent).is_none() {
                    return Err(ManifestError::Invalid(ModelError::InvalidSample {
                        id: s.id.clone(),
                        reason: format!("parent {parent} is not a training original"),
                    })
                    .into());
                }
                out.push(s.clone())?;
            }
            write_manifest(&out, &self.layout.mixed())?;
            Ok(())
        })
    }

    /// Trains a regressor on the manifest for `source`.
    pub fn train(&self, source: Source) -> Result<(), PipelineError> {
        self.write_config()?;
        let ckpt = self.layout.checkpoint(source);
        let outputs = [
            ckpt.clone(),
            crate::regression::sidecar_path(&ckpt),
            self.layout.training_log(source),
        ];
        self.stage(&outputs, || {
            let m = self.load(&self.layout.training_manifest(source))?;
            let data = TrainingSet::from_manifest(&m, &self.images())?;
            log::info!("training {} on {} samples", source.name(), data.len());
            let (model, log) = train(&data, &self.cfg.regressor)?;
            create_parent(&ckpt)?;
            let meta = save_checkpoint(&model, &log, &m.content_hash()?, &ckpt)?;
            log::info!("{}: final loss {}", source.name(), meta.final_loss);
            let mut text =
                serde_json::to_string_pretty(&log).expect("training log serializes");
            text.push('\n');
            let lpath = self.layout.training_log(source);
            std::fs::write(&lpath, text).map_err(|e| io_err(&lpath, e))
        })
    }

    /// Evaluates every trained model on the test split.
    pub fn eval(&self) -> Result<EvalReport, PipelineError> {
        self.write_config()?;
        self.stage(&[self.layout.eval_dir()], || {
            let test = self.load(&self.layout.split("test"))?;
            let images = self.images();
            let mut report = EvalReport {
                categories: Vec::new(),
                counts: BTreeMap::new(),
                rows: Vec::new(),
            };
            let mut any = false;
            for s in Source::ALL {
                let ckpt = self.layout.checkpoint(s);
                if !ckpt.exists() {
                    continue;
                }
                let (model, _) = load_checkpoint(&ckpt)?;
                let row = evaluate(&model, &test, &images, &s.row(&self.cfg.dataset.attribute))?;
                report.merge(row)?;
                any = true;
            }
            if !any {
                return Err(PipelineError::MissingArtifact(
                    self.layout.root().join("models").display().to_string(),
                ));
            }
            let path = self.layout.eval_report();
            create_parent(&path)?;
            std::fs::write(&path, report.to_json()).map_err(|e| io_err(&path, e))?;
            Ok(report)
        })
    }

    /// Renders the evaluation report as a text table.
    pub fn report(&self) -> Result<String, PipelineError> {
        self.write_config()?;
        self.stage(&[self.layout.report_dir()], || {
            let src = self.layout.eval_report();
            if !src.exists() {
                return Err(PipelineError::MissingArtifact(src.display().to_string()));
            }
            let text = std::fs::read_to_string(&src).map_err(|e| io_err(&src, e))?;
            let table = render_report(&EvalReport::from_json(&text)?);
            let path = self.layout.report_table();
            create_parent(&path)?;
            std::fs::write(&path, &table).map_err(|e| io_err(&path, e))?;
            Ok(table)
        })
    }

    /// Every stage in order, training all three sources.
    pub fn bench(&self) -> Result<String, PipelineError> {
        self.gen_world()?;
        self.fit_directions()?;
        self.augment()?;
        self.filter()?;
        self.mix()?;
        for s in Source::ALL {
            self.train(s)?;
        }
        self.eval()?;
        self.report()
    }
}

fn create_parent(path: &Path) -> Result<(), PipelineError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
        }
        _ => Ok(()),
    }
}

fn remove_all(paths: &[PathBuf]) -> Result<(), PipelineError> {
    for p in paths {
        let r = if p.is_dir() {
            std::fs::remove_dir_all(p)
        } else {
            std::fs::remove_file(p)
        };
        match r {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(p, e)),
        }
    }
    Ok(())
}
